"""Pure numpy/scipy time-march kernels.

Selected automatically when the compiled extension is unavailable (or when
PRANDTLIN_PURE is set). Same contracts as prandtlin._kernels._core.
"""

import numpy as np
from scipy.linalg import solve_banded

NAME = "fallback"


def heat_march(u0: np.ndarray, dy: float, dt: float, nsteps: int) -> np.ndarray:
    """Crank-Nicolson march of du/dt = d2u/dy2 with both ends held fixed.

    Returns the full history, shape (nsteps+1, ny).
    """
    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    ny = u0.shape[0]
    out = np.empty((nsteps + 1, ny), dtype=np.float64)
    out[0] = u0
    r = dt / dy**2
    n_in = ny - 2
    ab = np.zeros((3, n_in))
    ab[0, 1:] = -0.5 * r
    ab[1, :] = 1.0 + r
    ab[2, :-1] = -0.5 * r
    u = u0.copy()
    for n in range(nsteps):
        rhs = 0.5 * r * (u[:-2] + u[2:]) + (1.0 - r) * u[1:-1]
        rhs[0] += 0.5 * r * u[0]
        rhs[-1] += 0.5 * r * u[-1]
        u[1:-1] = solve_banded((1, 1), ab, rhs)
        out[n + 1] = u
    return out


def mode_march(
    u0: np.ndarray,
    us: np.ndarray,
    dy: float,
    dt: float,
    k: int,
    eps2k2: float,
    store_every: int = 1,
) -> np.ndarray:
    """March one tangential mode of the linearized equation.

    d/dt u = -i k us u + d2u/dy2 - eps2k2 u - v dus,  v = -i k cumtrapz(u),
    with homogeneous Dirichlet ends. The diagonal terms (transport, diffusion,
    damping) are Crank-Nicolson; the nonlocal v-coupling is explicit Euler.
    us holds the shear profile at every step, shape (nsteps+1, ny).

    Returns stored snapshots, shape (nsteps//store_every + 1, ny).
    """
    u0 = np.ascontiguousarray(u0, dtype=np.complex128)
    us = np.asarray(us, dtype=np.float64)
    nsteps = us.shape[0] - 1
    ny = u0.shape[0]
    if us.shape[1] != ny:
        raise ValueError("us row length does not match mode profile")
    nstored = nsteps // store_every + 1
    out = np.empty((nstored, ny), dtype=np.complex128)
    out[0] = u0
    r = dt / dy**2
    n_in = ny - 2
    ab = np.zeros((3, n_in), dtype=np.complex128)
    ab[0, 1:] = -0.5 * r
    ab[2, :-1] = -0.5 * r
    u = u0.copy()
    ik = 1j * k
    half = 0.5 * dt
    for n in range(nsteps):
        dus = np.empty(ny)
        dus[1:-1] = (us[n, 2:] - us[n, :-2]) / (2.0 * dy)
        dus[0] = dus[-1] = 0.0  # end rows are Dirichlet, coupling unused there
        v = np.empty(ny, dtype=np.complex128)
        v[0] = 0.0
        np.cumsum(0.5 * dy * (u[1:] + u[:-1]), out=v[1:])
        v *= -ik
        c = -v * dus
        qn = half * (ik * us[n, 1:-1] + eps2k2)
        rhs = 0.5 * r * (u[:-2] + u[2:]) + (1.0 - r - qn) * u[1:-1] + dt * c[1:-1]
        ab[1, :] = 1.0 + r + half * (ik * us[n + 1, 1:-1] + eps2k2)
        u[1:-1] = solve_banded((1, 1), ab, rhs)
        if not np.isfinite(u[1:-1]).all():
            raise FloatingPointError(f"mode march diverged at step {n + 1} (k={k})")
        if (n + 1) % store_every == 0:
            out[(n + 1) // store_every] = u
    return out
