"""Hot loops: platoon time-marching and frequency-grid magnitude sweeps.

Every kernel is plain python/numpy first and jitted by numba second; the
dispatchers at the bottom pick one according to ``_jit.USE_NUMBA``.
"""
import math

import numpy as np

from . import _jit
from ._jit import njit, prange


@njit
def platoon_kernel(n_steps, ratio, dt, tau, act_lat, comm_lat, gap_ref, s0, v0, a0,
                   leader_u, exp_d, w_own, n_own, w_prev, n_prev, krow, mode, noise,
                   sat_limit):
    n_veh = tau.shape[0]
    n_ctrl = n_steps // ratio + 1

    s = np.zeros((n_steps + 1, n_veh))
    v = np.zeros((n_steps + 1, n_veh))
    a = np.zeros((n_steps + 1, n_veh))
    u_cmd = np.zeros((n_steps + 1, n_veh))
    u_app = np.zeros((n_steps + 1, n_veh))
    u_ctrl = np.zeros((n_ctrl, n_veh))
    u_recv = np.zeros((n_ctrl, n_veh))
    s[0, :] = s0
    v[0, :] = v0
    a[0, :] = a0

    # exact ZOH coefficients over one sim step
    e = np.empty(n_veh)
    one_m_e = np.empty(n_veh)
    v_u = np.empty(n_veh)
    x_a = np.empty(n_veh)
    x_u = np.empty(n_veh)
    for i in range(n_veh):
        t = tau[i]
        one_m_e[i] = -math.expm1(-dt / t)
        e[i] = 1.0 - one_m_e[i]
        v_u[i] = dt - t * one_m_e[i]
        x_a[i] = t * v_u[i]
        x_u[i] = 0.5 * dt * dt - t * v_u[i]

    xbar = np.empty(5)
    disp = np.empty(n_veh)
    for n in range(n_steps + 1):
        if n % ratio == 0:
            k = n // ratio
            for i in range(n_veh):
                if i == 0:
                    u = leader_u[k]
                else:
                    idx = n - comm_lat[i]
                    if idx < 0:
                        idx = 0
                    xbar[0] = s[n, i] - gap_ref[i] + noise[k, i, 0]
                    xbar[1] = v[n, i] + noise[k, i, 1]
                    xbar[2] = v[idx, i - 1] + noise[k, i, 2]
                    xbar[3] = a[n, i] + noise[k, i, 3]
                    xbar[4] = a[idx, i - 1] + noise[k, i, 4]
                    kc = k - comm_lat[i] // ratio
                    urec = noise[k, i, 5]
                    if kc >= 0:
                        urec += u_ctrl[kc, i - 1]
                    u_recv[k, i] = urec

                    u = 0.0
                    if mode[i] == 0:
                        for r in range(5):
                            qr = 0.0
                            for c in range(5):
                                qr += exp_d[i, r, c] * xbar[c]
                            for j in range(n_own[i]):
                                if k - 1 - j < 0:
                                    break
                                qr += w_own[i, j, r] * u_ctrl[k - 1 - j, i]
                            for j in range(n_prev[i]):
                                if k - 1 - j < 0:
                                    break
                                qr += w_prev[i, j, r] * u_recv[k - 1 - j, i]
                            u += krow[i, r] * qr
                    else:
                        for r in range(5):
                            u += krow[i, r] * xbar[r]
                    if u > sat_limit:
                        u = sat_limit
                    elif u < -sat_limit:
                        u = -sat_limit
                u_ctrl[k, i] = u

        k_hold = n // ratio
        for i in range(n_veh):
            u_cmd[n, i] = u_ctrl[k_hold, i]
            m = n - act_lat[i]
            u_app[n, i] = u_cmd[m, i] if m >= 0 else 0.0

        if n == n_steps:
            break
        for i in range(n_veh):
            ai = a[n, i]
            vi = v[n, i]
            ui = u_app[n, i]
            disp[i] = vi * dt + ai * x_a[i] + ui * x_u[i]
            v[n + 1, i] = vi + ai * tau[i] * one_m_e[i] + ui * v_u[i]
            a[n + 1, i] = ai * e[i] + ui * one_m_e[i]
        s[n + 1, 0] = s[n, 0]
        for i in range(1, n_veh):
            s[n + 1, i] = s[n, i] + disp[i - 1] - disp[i]

    return s, v, a, u_cmd, u_app, u_ctrl, u_recv


@njit(parallel=True)
def _peak_rows_numba(num, den, zm1, zp1):
    rows = num.shape[0]
    best = np.empty(rows)
    arg = np.empty(rows, dtype=np.int64)
    for row in prange(rows):
        a2, a1, a0 = num[row, 0], num[row, 1], num[row, 2]
        d3, d2, d1, d0 = den[row, 0], den[row, 1], den[row, 2], den[row, 3]
        top = -1.0
        k = 0
        for m in range(zm1.shape[0]):
            # x = j*sx and y = cy are pure imaginary / real: expand by hand
            sx = zm1[m].imag
            cy = zp1[m].real
            sx2 = sx * sx
            cy2 = cy * cy
            n_re = (a0 * cy2 - a2 * sx2) * cy
            n_im = a1 * sx * cy2
            d_re = d0 * cy2 * cy - d2 * sx2 * cy
            d_im = d1 * sx * cy2 - d3 * sx2 * sx
            val = (n_re * n_re + n_im * n_im) / (d_re * d_re + d_im * d_im)
            if val > top:
                top = val
                k = m
        best[row] = math.sqrt(top)
        arg[row] = k
    return best, arg


def _peak_rows_numpy(num, den, zm1, zp1, chunk=64):
    rows = num.shape[0]
    best = np.empty(rows)
    arg = np.empty(rows, dtype=np.int64)
    x, y = zm1, zp1
    for start in range(0, rows, chunk):
        n = num[start:start + chunk, :, None]
        d = den[start:start + chunk, :, None]
        nv = ((n[:, 0] * x + n[:, 1] * y) * x + n[:, 2] * y * y) * y
        dv = ((d[:, 0] * x + d[:, 1] * y) * x + d[:, 2] * y * y) * x + d[:, 3] * y**3
        mag = np.abs(nv) / np.abs(dv)
        arg[start:start + chunk] = np.argmax(mag, axis=1)
        best[start:start + chunk] = np.max(mag, axis=1)
    return best, arg


def tustin_basis_points(omega, Ts):
    """``z - 1`` and ``z + 1`` on the unit circle with the common phase removed.

    Both are scaled by ``exp(-j omega Ts / 2)``; magnitudes of degree-3
    homogeneous ratios are unaffected and no cancellation occurs near DC.
    """
    half = 0.5 * np.asarray(omega, dtype=float) * Ts
    return 2j * np.sin(half), (2.0 * np.cos(half)).astype(complex)


def grid_peaks(num, den, omega, Ts):
    """Peak of ``|N/D|`` over ``omega`` per row of Tustin-basis coefficients.

    ``num`` rows weight ``(z-1)^2 (z+1), (z-1)(z+1)^2, (z+1)^3`` and ``den``
    rows weight ``(z-1)^3, (z-1)^2 (z+1), (z-1)(z+1)^2, (z+1)^3``.
    """
    num = np.ascontiguousarray(np.atleast_2d(num), dtype=float)
    den = np.ascontiguousarray(np.atleast_2d(den), dtype=float)
    zm1, zp1 = tustin_basis_points(omega, Ts)
    if _jit.USE_NUMBA:
        return _peak_rows_numba(num, den, zm1, zp1)
    return _peak_rows_numpy(num, den, zm1, zp1)


def run_platoon(*args):
    if _jit.USE_NUMBA:
        return platoon_kernel(*args)
    return platoon_kernel.py_func(*args)
