"""Physical and scheme parameters, and the velocity stabilization."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class MhdParams:
    Re: float = 1.0
    Rm: float = 1.0
    kappa: float = 1.0
    xi: float = 0.5
    beta_n: float = 1.0
    beta_t: float = 1.0

    def __post_init__(self):
        if min(self.Re, self.Rm, self.kappa) <= 0:
            raise ValueError("Re, Rm and kappa must be positive")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("xi must lie in [0, 1]")
        if self.beta_n <= 0 or self.beta_t <= 0:
            raise ValueError("beta_n and beta_t must be positive")

    @property
    def Ha(self):
        return math.sqrt(self.kappa * self.Re * self.Rm)

    @classmethod
    def from_lundquist(cls, S, kappa=1.0, **kw):
        """Alfven-speed scaling: Re = Rm = S."""
        return cls(Re=S, Rm=S, kappa=kappa, **kw)

    @classmethod
    def from_hartmann(cls, Ha, Re, Rm):
        return cls(Re=Re, Rm=Rm, kappa=Ha ** 2 / (Re * Rm))


def stabilization(w_dot_n):
    """Tangential and normal velocity stabilization parameters."""
    w = np.asarray(w_dot_n, dtype=float)
    tau_t = 0.5 * np.sqrt(4.0 + w * w)
    tau_n = 0.5 * np.sqrt(8.0 + w * w)
    if tau_t.ndim == 0:
        return float(tau_t), float(tau_n)
    return tau_t, tau_n


def stabilization_tensor(w_dot_n, n):
    """S_u = tau_t (I - n n^T) + tau_n n n^T for a unit normal ``n``."""
    tau_t, tau_n = stabilization(w_dot_n)
    n = np.asarray(n, dtype=float)
    N = np.outer(n, n)
    return tau_t * (np.eye(len(n)) - N) + tau_n * N
