"""Per-mode evolution of the linearized equation around the shear flow.

Each tangential wavenumber k evolves independently:

    d/dt u_k = -i k u^s u_k - v_k d(u^s)/dy + d2/dy2 u_k - eps^2 k^2 u_k,
    v_k = -i k * integral_0^y u_k,

with homogeneous Dirichlet conditions at y = 0 and the truncation boundary.
The diagonal terms are advanced by Crank-Nicolson, the nonlocal v-coupling
explicitly; each step is one tridiagonal solve per mode (see _kernels).
"""

from __future__ import annotations

import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import mode_march
from .grid import Grid, cumsimpson, cumtrapz, diff1_o4, diff2_o4
from .shear import ShearFlow

FARFIELD_TOL = 1e-6


@dataclass
class SolutionState:
    """All tangential modes at one time: complex profiles in y per wavenumber."""

    t: float
    ks: np.ndarray
    fields: np.ndarray  # complex, shape (len(ks), ny)
    grid: Grid
    epsilon: float = 0.0

    def __post_init__(self):
        self.ks = np.asarray(self.ks, dtype=np.int64)
        self.fields = np.asarray(self.fields, dtype=np.complex128)
        if self.fields.shape != (self.ks.size, self.grid.ny):
            raise ValueError("fields shape does not match (nk, ny)")

    def mode(self, k: int) -> np.ndarray:
        idx = np.nonzero(self.ks == k)[0]
        if idx.size != 1:
            raise KeyError(f"mode k={k} not present")
        return self.fields[idx[0]]

    def check_boundaries(self) -> list[int]:
        """Return wavenumbers whose far-field value exceeds the decay tolerance."""
        if np.max(np.abs(self.fields[:, 0])) > 1e-12:
            raise ValueError("mode profiles must vanish at y=0")
        bad = np.abs(self.fields[:, -1]) > FARFIELD_TOL
        return [int(k) for k in self.ks[bad]]


def symmetric_ks(kmax: int) -> np.ndarray:
    return np.arange(-kmax, kmax + 1, dtype=np.int64)


def make_bump_state(
    grid: Grid,
    ks,
    y0: float = 1.0,
    width: float = 0.1,
    amplitude: float = 1.0,
    taper: np.ndarray | None = None,
    epsilon: float = 0.0,
) -> SolutionState:
    """Gaussian bump in y, identical across modes up to an optional k-taper.

    The bump is zeroed at the wall and at the truncation boundary. Real taper
    plus a real bump gives conjugate-symmetric data.
    """
    y = grid.nodes
    g = amplitude * np.exp(-(((y - y0) / width) ** 2))
    g[0] = 0.0
    g[-1] = 0.0
    ks = np.asarray(ks, dtype=np.int64)
    fields = np.repeat(g[None, :], ks.size, axis=0).astype(np.complex128)
    if taper is not None:
        fields *= np.asarray(taper)[:, None]
    return SolutionState(t=0.0, ks=ks, fields=fields, grid=grid, epsilon=epsilon)


def make_displacement_state(
    grid: Grid,
    dus: np.ndarray,
    ks,
    y0: float = 1.0,
    width: float = 0.7,
    amplitude: float = 1.0,
    taper: np.ndarray | None = None,
    epsilon: float = 0.0,
) -> SolutionState:
    """Displacement-type data: the shear derivative times a smooth envelope.

    u0 = a dus(y) exp(-((y-y0)/w)^2) (1 - e^{-(y/0.3)^2}) models a small
    vertical displacement of the shear profile; the quotient u0/dus is smooth,
    so the derived unknowns start well-prepared (no structure concentrated at
    the monotonicity-cutoff edges).
    """
    y = grid.nodes
    env = amplitude * np.exp(-(((y - y0) / width) ** 2)) * (1.0 - np.exp(-((y / 0.3) ** 2)))
    prof = np.asarray(dus) * env
    prof[0] = 0.0
    prof[-1] = 0.0
    ks = np.asarray(ks, dtype=np.int64)
    fields = np.repeat(prof[None, :], ks.size, axis=0).astype(np.complex128)
    if taper is not None:
        fields *= np.asarray(taper)[:, None]
    return SolutionState(t=0.0, ks=ks, fields=fields, grid=grid, epsilon=epsilon)


def compute_v(field: np.ndarray, k: int, grid: Grid) -> np.ndarray:
    """Normal velocity from incompressibility: v = -i k * cumtrapz(u)."""
    return -1j * k * cumtrapz(grid, field)


@dataclass
class Trajectory:
    """Stored mode history of one evolution run."""

    times: np.ndarray
    ks: np.ndarray
    fields: np.ndarray  # complex, shape (nstored, nk, ny)
    grid: Grid
    flow: ShearFlow
    epsilon: float
    store_every: int

    @property
    def dt_store(self) -> float:
        return self.flow.dt * self.store_every

    def state_at(self, j: int) -> SolutionState:
        return SolutionState(
            t=float(self.times[j]),
            ks=self.ks,
            fields=self.fields[j],
            grid=self.grid,
            epsilon=self.epsilon,
        )

    def shear_index(self, j: int) -> int:
        return j * self.store_every


def cfl_warning(ks, flow: ShearFlow) -> float:
    """Transport CFL heuristic |k| max|u^s| dt; warns above 1."""
    kmax = max((abs(int(k)) for k in np.atleast_1d(ks)), default=0)
    val = kmax * float(np.max(np.abs(flow.us[0]))) * flow.dt
    if val > 1.0:
        warnings.warn(f"|k| max|u^s| dt = {val:.3f} > 1: transport underresolved", stacklevel=2)
    return val


def evolve(
    init: SolutionState,
    flow: ShearFlow,
    T: float,
    store_every: int = 1,
    threads: int = 1,
) -> Trajectory:
    """March every mode of `init` to time T against the shear history.

    Modes are independent; with threads > 1 they run on a thread pool (the
    compiled kernel releases the GIL). Results are assembled in the fixed mode
    order of `init`, so the output is identical for any thread count.
    """
    init.check_boundaries()
    dt = flow.dt
    nsteps = int(round(T / dt))
    if nsteps > flow.nsteps:
        raise ValueError(f"T={T} exceeds the shear history horizon {flow.T}")
    if nsteps % store_every != 0:
        raise ValueError("store_every must divide the step count")
    cfl_warning(init.ks, flow)
    us = flow.us[: nsteps + 1]
    eps = init.epsilon
    g = init.grid

    def run(m: int) -> np.ndarray:
        k = int(init.ks[m])
        return mode_march(init.fields[m], us, g.dy, dt, k, (eps * k) ** 2, store_every)

    nk = init.ks.size
    if threads > 1 and nk > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, range(nk)))
    else:
        results = [run(m) for m in range(nk)]
    fields = np.stack(results, axis=1)  # (nstored, nk, ny)
    times = np.arange(fields.shape[0]) * dt * store_every + init.t
    return Trajectory(
        times=times,
        ks=init.ks.copy(),
        fields=fields,
        grid=g,
        flow=flow,
        epsilon=eps,
        store_every=store_every,
    )


def step(state: SolutionState, flow: ShearFlow, dt: float) -> SolutionState:
    """Advance one step from the state's time against the shear history."""
    i = flow.index_at(state.t)
    if abs(dt - flow.dt) > 1e-12 * flow.dt:
        raise ValueError("step dt must match the shear march dt")
    us = flow.us[i : i + 2]
    out = np.empty_like(state.fields)
    for m, k in enumerate(state.ks):
        out[m] = mode_march(
            state.fields[m], us, state.grid.dy, dt, int(k), (state.epsilon * k) ** 2, 1
        )[-1]
    return SolutionState(
        t=state.t + dt, ks=state.ks, fields=out, grid=state.grid, epsilon=state.epsilon
    )


# ---------------------------------------------------------------------------
# residual of the primitive equation
# ---------------------------------------------------------------------------


def residual_u(traj: Trajectory) -> dict:
    """Centered-time discrete residual of the primitive per-mode equation.

    Spatial terms are rebuilt with fourth-order stencils and cumulative
    Simpson quadrature, independent of the second-order calculus the stepper
    uses, so the residual exposes the scheme's O(dt) + O(dy^2) error instead
    of telescoping to zero. Reported as the unweighted L2 norm per mode over
    interior nodes, one value per interior stored sample.
    """
    if traj.times.size < 3:
        raise ValueError("need at least 3 stored steps")
    g = traj.grid
    h = traj.dt_store
    eps = traj.epsilon
    nj = traj.times.size
    out = np.zeros((nj - 2, traj.ks.size))
    sl = slice(2, -2)
    for j in range(1, nj - 1):
        i = traj.shear_index(j)
        us = traj.flow.us[i]
        dus = diff1_o4(g, us)
        for m, k in enumerate(traj.ks):
            u = traj.fields[j, m]
            dudt = (traj.fields[j + 1, m] - traj.fields[j - 1, m]) / (2.0 * h)
            v = -1j * int(k) * cumsimpson(g, u)
            r = (
                dudt
                + 1j * int(k) * us * u
                + v * dus
                - diff2_o4(g, u)
                + (eps * int(k)) ** 2 * u
            )
            out[j - 1, m] = math.sqrt(float(g.dy * np.sum(np.abs(r[sl]) ** 2)))
    return {
        "times": traj.times[1:-1].copy(),
        "ks": traj.ks.copy(),
        "norms": out,
        "max": float(np.max(out)) if out.size else 0.0,
    }


# ---------------------------------------------------------------------------
# snapshot CSV
# ---------------------------------------------------------------------------


def snapshot_name(t: float) -> str:
    return f"snapshot_t{t:.6f}.csv"


def write_snapshot(directory, state: SolutionState) -> Path:
    """One CSV per time: y plus re/im columns for every mode; 17 significant digits."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / snapshot_name(state.t)
    cols = [f"{p}_k{int(k)}" for k in state.ks for p in ("re", "im")]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["y"] + cols) + "\n")
        for j, y in enumerate(state.grid.nodes):
            vals = [f"{y:.17g}"]
            for m in range(state.ks.size):
                z = state.fields[m, j]
                vals.append(f"{z.real:.17g}")
                vals.append(f"{z.imag:.17g}")
            fh.write(",".join(vals) + "\n")
    return path


def read_snapshot(path, grid: Grid, epsilon: float = 0.0) -> SolutionState:
    """Read a snapshot written by write_snapshot; exact decimal round trip."""
    path = Path(path)
    m = re.match(r"snapshot_t([0-9.+-e]+)\.csv$", path.name)
    if not m:
        raise ValueError(f"not a snapshot file name: {path.name}")
    t = float(m.group(1))
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        ks = []
        for name in header[1::2]:
            km = re.match(r"re_k(-?\d+)$", name)
            if not km:
                raise ValueError(f"unexpected snapshot column {name}")
            ks.append(int(km.group(1)))
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=np.float64)
    if data.shape[0] != grid.ny:
        raise ValueError("snapshot row count does not match grid")
    fields = (data[:, 1::2] + 1j * data[:, 2::2]).T.copy()
    return SolutionState(
        t=t, ks=np.asarray(ks, dtype=np.int64), fields=fields, grid=grid, epsilon=epsilon
    )
