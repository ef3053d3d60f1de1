# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-march kernels (hot inner loops).

Same contracts as prandtlin._kernels._fallback; the whole march runs in C with
the GIL released, so per-mode sweeps parallelize across threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

NAME = "cython"


cdef void _thomas_real(double* dl, double* d, double* du, double* b, int n) noexcept nogil:
    # in-place Thomas solve; dl/du are the constant off-diagonals (scalars smeared
    # by caller), d and b are overwritten
    cdef int i
    cdef double w
    for i in range(1, n):
        w = dl[i] / d[i - 1]
        d[i] -= w * du[i - 1]
        b[i] -= w * b[i - 1]
    b[n - 1] /= d[n - 1]
    for i in range(n - 2, -1, -1):
        b[i] = (b[i] - du[i] * b[i + 1]) / d[i]


def heat_march(u0, double dy, double dt, int nsteps):
    """Crank-Nicolson march of du/dt = d2u/dy2 with both ends held fixed."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u0a = np.ascontiguousarray(u0, dtype=np.float64)
    cdef int ny = u0a.shape[0]
    cdef int n_in = ny - 2
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nsteps + 1, ny), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.empty(n_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dl = np.empty(n_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] du = np.empty(n_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b = np.empty(n_in)
    cdef double r = dt / (dy * dy)
    cdef double* po
    cdef double* pn
    cdef double* pd = &d[0]
    cdef double* pdl = &dl[0]
    cdef double* pdu = &du[0]
    cdef double* pb = &b[0]
    cdef int n, j
    out[0, :] = u0a
    with nogil:
        for j in range(n_in):
            pdl[j] = -0.5 * r
            pdu[j] = -0.5 * r
        for n in range(nsteps):
            po = &out[n, 0]
            pn = &out[n + 1, 0]
            for j in range(n_in):
                pd[j] = 1.0 + r
                pb[j] = 0.5 * r * (po[j] + po[j + 2]) + (1.0 - r) * po[j + 1]
            pb[0] += 0.5 * r * po[0]
            pb[n_in - 1] += 0.5 * r * po[ny - 1]
            _thomas_real(pdl, pd, pdu, pb, n_in)
            pn[0] = po[0]
            pn[ny - 1] = po[ny - 1]
            for j in range(n_in):
                pn[j + 1] = pb[j]
    return out


def mode_march(u0, us, double dy, double dt, int k, double eps2k2, int store_every=1):
    """March one tangential mode; see the fallback docstring for the scheme."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] u = np.ascontiguousarray(u0, dtype=np.complex128).copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=2] usa = np.ascontiguousarray(us, dtype=np.float64)
    cdef int nsteps = usa.shape[0] - 1
    cdef int ny = u.shape[0]
    if usa.shape[1] != ny:
        raise ValueError("us row length does not match mode profile")
    cdef int nstored = nsteps // store_every + 1
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] out = np.empty((nstored, ny), dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] d = np.empty(ny - 2, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] b = np.empty(ny - 2, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] v = np.empty(ny, dtype=np.complex128)
    cdef int n_in = ny - 2
    cdef double r = dt / (dy * dy)
    cdef double half = 0.5 * dt
    cdef double off = -0.5 * r
    cdef double kk = <double> k
    cdef double complex ik = 1j * kk
    cdef double complex w, qn, c, acc
    cdef double dus
    cdef double* pus
    cdef double* pus1
    cdef double complex* pu = &u[0]
    cdef double complex* pv = &v[0]
    cdef double complex* pd = &d[0]
    cdef double complex* pb = &b[0]
    cdef double complex* pout
    cdef int n, j, bad
    out[0, :] = u
    bad = 0
    with nogil:
        for n in range(nsteps):
            pus = &usa[n, 0]
            pus1 = &usa[n + 1, 0]
            # v = -i k * cumulative trapezoid of u
            acc = 0.0
            pv[0] = 0.0
            for j in range(1, ny):
                acc = acc + 0.5 * dy * (pu[j - 1] + pu[j])
                pv[j] = -ik * acc
            for j in range(n_in):
                dus = (pus[j + 2] - pus[j]) / (2.0 * dy)
                c = -pv[j + 1] * dus
                qn = half * (ik * pus[j + 1] + eps2k2)
                pb[j] = 0.5 * r * (pu[j] + pu[j + 2]) + (1.0 - r - qn) * pu[j + 1] + dt * c
                pd[j] = 1.0 + r + half * (ik * pus1[j + 1] + eps2k2)
            # complex Thomas with constant off-diagonals
            for j in range(1, n_in):
                w = off / pd[j - 1]
                pd[j] = pd[j] - w * off
                pb[j] = pb[j] - w * pb[j - 1]
            pb[n_in - 1] = pb[n_in - 1] / pd[n_in - 1]
            for j in range(n_in - 2, -1, -1):
                pb[j] = (pb[j] - off * pb[j + 1]) / pd[j]
            for j in range(n_in):
                pu[j + 1] = pb[j]
            if not (isfinite(pu[1].real) and isfinite(pu[ny // 2].real)):
                bad = n + 1
                break
            if (n + 1) % store_every == 0:
                pout = &out[(n + 1) // store_every, 0]
                for j in range(ny):
                    pout[j] = pu[j]
    if bad:
        raise FloatingPointError(f"mode march diverged at step {bad} (k={k})")
    return out
