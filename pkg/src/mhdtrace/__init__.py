"""Block-preconditioned solvers for the statically condensed HDG trace system of 2D resistive MHD."""
__version__ = "0.1.0"
