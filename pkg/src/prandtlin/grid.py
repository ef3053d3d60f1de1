"""Uniform grid on the truncated half-line with finite differences and quadrature.

Everything downstream (shear flow, mode evolution, energy functionals) lives on
profiles sampled on this grid. Truncation at y = L stands in for y -> infinity;
the profiles of interest decay exponentially, so L = 30 commits errors below
1e-12.
"""

import math
from dataclasses import dataclass

import numpy as np

MIN_NY = 8


@dataclass(frozen=True)
class Grid:
    """Uniform nodes on [0, L], spacing dy = L/(ny-1)."""

    L: float
    ny: int
    nodes: np.ndarray
    dy: float

    def __post_init__(self):
        if self.nodes[0] != 0.0 or abs(self.nodes[-1] - self.L) > 1e-12 * self.L:
            raise ValueError("grid nodes must span [0, L]")


def build_grid(L: float, ny: int) -> Grid:
    """Build a uniform grid on [0, L] with ny nodes.

    Raises ValueError for non-finite L, L <= 0 or ny below the minimum node
    count needed by the second-order stencils.
    """
    if not np.isfinite(L) or L <= 0:
        raise ValueError(f"domain length must be finite and positive, got {L}")
    ny = int(ny)
    if ny < MIN_NY:
        raise ValueError(f"ny must be >= {MIN_NY}, got {ny}")
    nodes = np.linspace(0.0, float(L), ny)
    return Grid(L=float(L), ny=ny, nodes=nodes, dy=float(L) / (ny - 1))


def _check_profile(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Profiles live on the last axis; leading axes (e.g. modes) broadcast."""
    f = np.asarray(f)
    if f.shape[-1] != grid.ny:
        raise ValueError(f"profile length {f.shape} does not match grid ({grid.ny},)")
    return f


def diff1(grid: Grid, f: np.ndarray) -> np.ndarray:
    """First derivative: second-order central interior, one-sided at the ends."""
    f = _check_profile(grid, f)
    df = np.empty_like(f, dtype=np.result_type(f, np.float64))
    h = grid.dy
    df[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * h)
    df[..., 0] = (-3.0 * f[..., 0] + 4.0 * f[..., 1] - f[..., 2]) / (2.0 * h)
    df[..., -1] = (3.0 * f[..., -1] - 4.0 * f[..., -2] + f[..., -3]) / (2.0 * h)
    return df


def diff2(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Second derivative: 3-point stencil interior, one-sided second order at the ends."""
    f = _check_profile(grid, f)
    d2 = np.empty_like(f, dtype=np.result_type(f, np.float64))
    h2 = grid.dy**2
    d2[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / h2
    # 4-point one-sided stencils, exact on cubics
    d2[..., 0] = (2.0 * f[..., 0] - 5.0 * f[..., 1] + 4.0 * f[..., 2] - f[..., 3]) / h2
    d2[..., -1] = (2.0 * f[..., -1] - 5.0 * f[..., -2] + 4.0 * f[..., -3] - f[..., -4]) / h2
    return d2


def _fd_weights(offsets: np.ndarray, deriv: int) -> np.ndarray:
    """Finite-difference weights for the given derivative on integer offsets."""
    n = len(offsets)
    A = np.vander(offsets.astype(float), n, increasing=True).T
    rhs = np.zeros(n)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(A, rhs)


# one-sided weights for the 4th-order residual stencils (rows: node 0, node 1)
_OS_D1 = [_fd_weights(np.arange(6) - i, 1) for i in (0, 1)]
_OS_D2 = [_fd_weights(np.arange(7) - i, 2) for i in (0, 1)]


def diff1_o4(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Fourth-order first derivative, used by residual evaluators.

    Kept independent of the second-order calculus that defines the schemes, so
    inserting a computed trajectory exposes the O(dy^2) part of its error.
    """
    f = _check_profile(grid, f)
    df = np.empty_like(f, dtype=np.result_type(f, np.float64))
    h = grid.dy
    df[..., 2:-2] = (f[..., :-4] - 8.0 * f[..., 1:-3] + 8.0 * f[..., 3:-1] - f[..., 4:]) / (
        12.0 * h
    )
    df[..., 0] = f[..., :6] @ _OS_D1[0] / h
    df[..., 1] = f[..., :6] @ _OS_D1[1] / h
    df[..., -1] = -(f[..., -1:-7:-1] @ _OS_D1[0]) / h
    df[..., -2] = -(f[..., -1:-7:-1] @ _OS_D1[1]) / h
    return df


def diff2_o4(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Fourth-order second derivative, used by residual evaluators."""
    f = _check_profile(grid, f)
    d2 = np.empty_like(f, dtype=np.result_type(f, np.float64))
    h2 = grid.dy**2
    d2[..., 2:-2] = (
        -f[..., :-4] + 16.0 * f[..., 1:-3] - 30.0 * f[..., 2:-2] + 16.0 * f[..., 3:-1] - f[..., 4:]
    ) / (12.0 * h2)
    d2[..., 0] = f[..., :7] @ _OS_D2[0] / h2
    d2[..., 1] = f[..., :7] @ _OS_D2[1] / h2
    d2[..., -1] = f[..., -1:-8:-1] @ _OS_D2[0] / h2
    d2[..., -2] = f[..., -1:-8:-1] @ _OS_D2[1] / h2
    return d2


def cumtrapz(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid from y=0; result[..., j] = integral over [0, nodes[j]]."""
    f = _check_profile(grid, f)
    out = np.empty_like(f, dtype=np.result_type(f, np.float64))
    out[..., 0] = 0.0
    np.cumsum(0.5 * grid.dy * (f[..., 1:] + f[..., :-1]), axis=-1, out=out[..., 1:])
    return out


def integrate(grid: Grid, f: np.ndarray, a: float, b: float) -> float | complex:
    """Trapezoid integral of f over [a, b] with linear end-interval correction.

    a and b need not be nodes: the integrand is interpolated linearly on the
    partial end cells, so the result is exact for linear f at any endpoints.
    """
    f = _check_profile(grid, f)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("integration endpoints must be finite")
    if a > b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    if a < -1e-12 or b > grid.L + 1e-12:
        raise ValueError(f"[{a}, {b}] outside grid range [0, {grid.L}]")
    a = min(max(a, 0.0), grid.L)
    b = min(max(b, 0.0), grid.L)
    h = grid.dy
    ia = int(np.ceil(a / h - 1e-12))
    ib = int(np.floor(b / h + 1e-12))
    if ia > ib:  # both endpoints inside one cell
        fa = _lin_interp(grid, f, a)
        fb = _lin_interp(grid, f, b)
        return 0.5 * (b - a) * (fa + fb)
    total = 0.0
    if ib > ia:
        total = np.sum(0.5 * h * (f[ia:ib] + f[ia + 1 : ib + 1]))
    ya = grid.nodes[ia]
    if a < ya:
        total += 0.5 * (ya - a) * (_lin_interp(grid, f, a) + f[ia])
    yb = grid.nodes[ib]
    if b > yb:
        total += 0.5 * (b - yb) * (f[ib] + _lin_interp(grid, f, b))
    return total


def _lin_interp(grid: Grid, f: np.ndarray, y: float):
    j = min(int(y / grid.dy), grid.ny - 2)
    w = (y - grid.nodes[j]) / grid.dy
    return (1.0 - w) * f[j] + w * f[j + 1]


def trapz(grid: Grid, f: np.ndarray):
    """Trapezoid integral over the whole grid (along the last axis)."""
    f = _check_profile(grid, f)
    return np.sum(0.5 * grid.dy * (f[..., 1:] + f[..., :-1]), axis=-1)


def cumsimpson(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Fourth-order cumulative integral from y=0 (complex-safe).

    scipy's cumulative_simpson discards imaginary parts, so the residual
    evaluators use this instead.
    """
    from scipy.integrate import cumulative_simpson

    f = _check_profile(grid, f)
    if np.iscomplexobj(f):
        re = cumulative_simpson(f.real, dx=grid.dy, initial=0.0)
        im = cumulative_simpson(f.imag, dx=grid.dy, initial=0.0)
        return re + 1j * im
    return cumulative_simpson(f, dx=grid.dy, initial=0.0)
