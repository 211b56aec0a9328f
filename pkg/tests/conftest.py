import math

import numpy as np
import pytest

from proxmla.mask import GridSpec, MaskSpec, unit_cell
from proxmla.resist import MOLD, SurfaceProfile


def spherical_dimples(spec: MaskSpec, D, h, dx, thickness=18.0, nx=None, ny=None):
    """Mold of spherical dimples (diameter D, sag h) on every lattice site of one periodic cell.

    Where caps overlap the deeper surface wins, as in a developed mold.
    """
    cell = unit_cell(spec)
    grid = GridSpec.for_cell(cell.width_um, cell.height_um, dx) if nx is None else GridSpec(
        nx, ny, cell.width_um / nx, cell.height_um / ny, cell.width_um, cell.height_um
    )
    R = (h**2 + D**2 / 4) / (2 * h)
    x, y = grid.coords()
    depth = np.zeros(grid.shape)
    for cx, cy in cell.centers:
        for j in (-1, 0, 1):
            for i in (-1, 0, 1):
                r2 = (x[None, :] - cx - i * cell.width_um) ** 2 + (y[:, None] - cy - j * cell.height_um) ** 2
                d = np.sqrt(np.maximum(R**2 - r2, 0.0)) - (R - h)
                depth = np.maximum(depth, np.where(r2 <= R**2, d, 0.0))
    return SurfaceProfile(grid, thickness - depth, MOLD), R


@pytest.fixture
def reference_mask():
    return MaskSpec(80.0, 120.0)


# criterion number -> list of (part, passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{name}: {d}" if name else d for name, _, d in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
