"""Legacy-VTK ASCII output of volume fields on the GLL sub-grid of each element."""
from __future__ import annotations

import numpy as np

from .local import IB, IJ, IQ, IR, IU


def write_vtk(path, mesh, basis, state, title="mhdtrace fields"):
    P = basis.P
    xr, yr = basis.vol_nodes_ref
    x, y = mesh.to_physical(xr, yr)
    npts = x.size
    cells = []
    for e in range(mesh.n_elements):
        o = e * P * P
        for j in range(P - 1):
            for i in range(P - 1):
                a = o + i + P * j
                cells.append((a, a + 1, a + 1 + P, a + P))
    c = state.coeffs
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {npts} double\n")
        np.savetxt(fh, np.stack([x.ravel(), y.ravel(), np.zeros(npts)], axis=1), fmt="%.12e")
        fh.write(f"CELLS {len(cells)} {5 * len(cells)}\n")
        np.savetxt(fh, np.hstack([np.full((len(cells), 1), 4), np.array(cells)]), fmt="%d")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        np.savetxt(fh, np.full(len(cells), 9), fmt="%d")
        fh.write(f"POINT_DATA {npts}\n")
        for name, (i0, i1) in (("u", (IU(0), IU(1))), ("b", (IB(0), IB(1)))):
            fh.write(f"VECTORS {name} double\n")
            np.savetxt(fh, np.stack([c[:, i0].ravel(), c[:, i1].ravel(), np.zeros(npts)], axis=1), fmt="%.12e")
        for name, k in (("q", IQ), ("J", IJ), ("r", IR)):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, c[:, k].ravel(), fmt="%.12e")
