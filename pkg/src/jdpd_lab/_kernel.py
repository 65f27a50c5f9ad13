"""Compiled fixed-step integrator for batches of independent runs.

Drives are pre-sampled on the half-substep grid ``t = j dt + q h / 2`` with
``h = dt / nsub`` and ``q = 0 .. 2 nsub``; the stimulus is passed as its
quadrature components so each run only needs ``cos(phi_x)`` and ``sin(phi_x)``.
"""

import math

import numba
import numpy as np
from numba import njit, prange

# TBB in this environment is too old for numba; OpenMP avoids the probe warning.
if numba.config.THREADING_LAYER == "default":
    numba.config.THREADING_LAYER = "omp"

STATUS_OK = 0
STATUS_NONFINITE = 1


@njit(cache=True, inline="always")
def _accel(d1, d2, v1, v2, phi_1, phi_2, i_in, n1, n2, P):
    # P = (L, L1, L2, Ic1, Ic2, R1, R2, C1, C2, k)
    L, L1, L2, Ic1, Ic2, R1, R2, C1, C2, k = P
    th1 = d1 + phi_1
    th2 = d2 - phi_2
    g = 1.0 / L + 1.0 / L1 + 1.0 / L2
    phi_a = (i_in / k + th1 / L1 + th2 / L2) / g
    i1 = k * (phi_a - th1) / L1
    i2 = k * (phi_a - th2) / L2
    a1 = (i1 - k * v1 / R1 - Ic1 * math.sin(d1) - n1) / (C1 * k)
    a2 = (i2 - k * v2 / R2 - Ic2 * math.sin(d2) - n2) / (C2 * k)
    return a1, a2


@njit(cache=True, inline="always")
def _node(d1, d2, phi_1, phi_2, i_in, P):
    L, L1, L2 = P[0], P[1], P[2]
    k = P[9]
    g = 1.0 / L + 1.0 / L1 + 1.0 / L2
    return (i_in / k + (d1 + phi_1) / L1 + (d2 - phi_2) / L2) / g


@njit(cache=True)
def _run_one(y, phip, phim, drv_s, drv_c, cx, sx, raw1, raw2, rawf, sig1, sig2, w,
             sigphi, noisy, nsub, dt, P, rec_start, out_phi, traj, record_traj):
    h = dt / nsub
    d1, d2, v1, v2 = y[0], y[1], y[2], y[3]
    f1 = 0.0
    f2 = 0.0
    n_steps = (phip.shape[0] - 1) // (2 * nsub)
    if record_traj:
        i0 = drv_s[0] * cx + drv_c[0] * sx
        traj[0, 0] = _node(d1, d2, phip[0] + phim, phip[0] - phim, i0, P)
        traj[0, 1] = d1
        traj[0, 2] = d2
    for j in range(n_steps):
        fn = 0.0
        if noisy:
            f1 += w * (sig1 * raw1[j] - f1)
            f2 += w * (sig2 * raw2[j] - f2)
            fn = sigphi * rawf[j]
        base = j * 2 * nsub
        for m in range(nsub):
            q = base + 2 * m
            pa = phip[q] + fn
            pm = phip[q + 1] + fn
            pb = phip[q + 2] + fn
            ia = drv_s[q] * cx + drv_c[q] * sx
            im = drv_s[q + 1] * cx + drv_c[q + 1] * sx
            ib = drv_s[q + 2] * cx + drv_c[q + 2] * sx

            a1, a2 = _accel(d1, d2, v1, v2, pa + phim, pa - phim, ia, f1, f2, P)
            k1d1, k1d2, k1v1, k1v2 = v1, v2, a1, a2
            e1 = d1 + 0.5 * h * k1d1
            e2 = d2 + 0.5 * h * k1d2
            u1 = v1 + 0.5 * h * k1v1
            u2 = v2 + 0.5 * h * k1v2
            a1, a2 = _accel(e1, e2, u1, u2, pm + phim, pm - phim, im, f1, f2, P)
            k2d1, k2d2, k2v1, k2v2 = u1, u2, a1, a2
            e1 = d1 + 0.5 * h * k2d1
            e2 = d2 + 0.5 * h * k2d2
            u1 = v1 + 0.5 * h * k2v1
            u2 = v2 + 0.5 * h * k2v2
            a1, a2 = _accel(e1, e2, u1, u2, pm + phim, pm - phim, im, f1, f2, P)
            k3d1, k3d2, k3v1, k3v2 = u1, u2, a1, a2
            e1 = d1 + h * k3d1
            e2 = d2 + h * k3d2
            u1 = v1 + h * k3v1
            u2 = v2 + h * k3v2
            a1, a2 = _accel(e1, e2, u1, u2, pb + phim, pb - phim, ib, f1, f2, P)
            d1 += h / 6.0 * (k1d1 + 2.0 * k2d1 + 2.0 * k3d1 + u1)
            d2 += h / 6.0 * (k1d2 + 2.0 * k2d2 + 2.0 * k3d2 + u2)
            v1 += h / 6.0 * (k1v1 + 2.0 * k2v1 + 2.0 * k3v1 + a1)
            v2 += h / 6.0 * (k1v2 + 2.0 * k2v2 + 2.0 * k3v2 + a2)
        if not (math.isfinite(d1) and math.isfinite(d2) and math.isfinite(v1) and math.isfinite(v2)):
            y[0], y[1], y[2], y[3] = d1, d2, v1, v2
            y[4], y[5] = f1, f2
            return STATUS_NONFINITE, j
        q = base + 2 * nsub
        if j >= rec_start or record_traj:
            ie = drv_s[q] * cx + drv_c[q] * sx
            pe = phip[q] + fn
            phi_a = _node(d1, d2, pe + phim, pe - phim, ie, P)
            if j >= rec_start:
                out_phi[j - rec_start] = phi_a
            if record_traj:
                traj[j + 1, 0] = phi_a
                traj[j + 1, 1] = d1
                traj[j + 1, 2] = d2
    y[0], y[1], y[2], y[3] = d1, d2, v1, v2
    y[4], y[5] = f1, f2
    return STATUS_OK, n_steps


@njit(cache=True, parallel=True)
def integrate_batch(y0, phip, phim, drv_s, drv_c, cosx, sinx, raw1, raw2, rawf,
                    sig1, sig2, w, sigphi, noisy, nsub, dt, P, rec_start, out_phi,
                    final_state, status, fail_step):
    """Integrate ``len(cosx)`` runs from the common initial state ``y0``.

    ``raw*`` are standard normal draws of shape (n_runs, n_steps) (ignored
    unless ``noisy``).  Writes the node phase of every step at or after
    ``rec_start`` into ``out_phi`` and the final [d1, d2, v1, v2, f1, f2] into
    ``final_state``.
    """
    n = cosx.shape[0]
    dummy = np.empty((1, 3))
    for r in prange(n):
        y = final_state[r]
        y[:4] = y0[:4]
        if noisy:
            st, js = _run_one(y, phip, phim, drv_s, drv_c, cosx[r], sinx[r], raw1[r], raw2[r], rawf[r],
                              sig1, sig2, w, sigphi, True, nsub, dt, P, rec_start, out_phi[r], dummy, False)
        else:
            st, js = _run_one(y, phip, phim, drv_s, drv_c, cosx[r], sinx[r], raw1[0], raw2[0], rawf[0],
                              sig1, sig2, w, sigphi, False, nsub, dt, P, rec_start, out_phi[r], dummy, False)
        status[r] = st
        fail_step[r] = js


@njit(cache=True)
def integrate_trajectory(y, phip, phim, drv_s, drv_c, cx, sx, raw1, raw2, rawf,
                         sig1, sig2, w, sigphi, noisy, nsub, dt, P, rec_start, out_phi, traj):
    """Single run recording [phi_A, d1, d2] at every step into ``traj``."""
    return _run_one(y, phip, phim, drv_s, drv_c, cx, sx, raw1, raw2, rawf,
                    sig1, sig2, w, sigphi, noisy, nsub, dt, P, rec_start, out_phi, traj, True)
