"""Small fixed-size matrix helpers for the predictor.

State ordering for the 5x5 matrices is ``(s - r, v_i, v_{i-1}, a_i, a_{i-1})``.
All closed forms are valid for any real time argument, including negative
ones (needed when the predecessor's actuation delay is the larger one).
"""
import math

import numpy as np

from .errors import DomainError

# indices of (gap, own speed, own accel) inside the 5-state layout
OWN_BLOCK = (0, 1, 3)


def _check_lag(tau, name="tau"):
    if not (tau > 0 and math.isfinite(tau)):
        raise DomainError(f"{name} must be positive and finite, got {tau!r}")


def build_gamma(tau_i, tau_prev):
    """Predictor system matrix for the ego/predecessor pair."""
    _check_lag(tau_i, "tau_i")
    _check_lag(tau_prev, "tau_prev")
    gamma = np.zeros((5, 5))
    gamma[0, 1] = -1.0
    gamma[0, 2] = 1.0
    gamma[1, 3] = 1.0
    gamma[2, 4] = 1.0
    gamma[3, 3] = -1.0 / tau_i
    gamma[4, 4] = -1.0 / tau_prev
    return gamma


def expm_gamma_closed(tau_i, tau_prev, delta):
    """Closed-form ``exp(Gamma * delta)``.

    Shared by ``exp(Gamma D_i)`` and ``exp(Gamma (D_i - D_{i-1}))``; ``delta``
    may be negative.
    """
    _check_lag(tau_i, "tau_i")
    _check_lag(tau_prev, "tau_prev")
    ei = math.exp(-delta / tau_i)
    ep = math.exp(-delta / tau_prev)
    m = np.eye(5)
    m[0, 1] = -delta
    m[0, 2] = delta
    m[0, 3] = tau_i * tau_i - delta * tau_i - tau_i * tau_i * ei
    m[0, 4] = -tau_prev * tau_prev + delta * tau_prev + tau_prev * tau_prev * ep
    m[1, 3] = tau_i - tau_i * ei
    m[2, 4] = tau_prev - tau_prev * ep
    m[3, 3] = ei
    m[4, 4] = ep
    return m


def int_expm_neg_gamma(tau_i, tau_prev, Ts):
    """Closed-form ``integral_0^Ts exp(-Gamma theta) d theta``."""
    _check_lag(tau_i, "tau_i")
    _check_lag(tau_prev, "tau_prev")
    if not Ts > 0:
        raise DomainError(f"Ts must be positive, got {Ts!r}")
    return _int_neg_closed(tau_i, tau_prev, Ts)


def int_expm_gamma(tau_i, tau_prev, Ts):
    """Closed-form ``integral_0^Ts exp(Gamma theta) d theta``.

    Equals ``exp(Gamma Ts) @ int_expm_neg_gamma(...)`` but avoids the
    ``exp(Ts / tau)`` sized intermediates of that product for long periods.
    """
    _check_lag(tau_i, "tau_i")
    _check_lag(tau_prev, "tau_prev")
    if not Ts > 0:
        raise DomainError(f"Ts must be positive, got {Ts!r}")
    # the negative-exponent closed form is analytic in its upper limit
    return -_int_neg_closed(tau_i, tau_prev, -Ts)


def _int_neg_closed(tau_i, tau_prev, Ts):
    # expm1 keeps the small-Ts entries accurate
    gi = math.expm1(Ts / tau_i)
    gp = math.expm1(Ts / tau_prev)
    m = np.zeros((5, 5))
    m[0, 0] = m[1, 1] = m[2, 2] = Ts
    m[0, 1] = Ts * Ts / 2.0
    m[0, 2] = -Ts * Ts / 2.0
    m[0, 3] = tau_i / 2.0 * (Ts * Ts + 2.0 * Ts * tau_i - 2.0 * gi * tau_i * tau_i)
    m[0, 4] = -tau_prev / 2.0 * (Ts * Ts + 2.0 * Ts * tau_prev - 2.0 * gp * tau_prev * tau_prev)
    m[1, 3] = tau_i * (Ts - tau_i * gi)
    m[2, 4] = tau_prev * (Ts - tau_prev * gp)
    m[3, 3] = tau_i * gi
    m[4, 4] = tau_prev * gp
    return m


def expm_numeric(M, delta=1.0):
    """``exp(M * delta)`` by scaling and squaring around a Taylor core.

    Accepts a single square matrix or a stack ``(..., n, n)``.
    """
    A = np.asarray(M, dtype=float) * delta
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix exponential of non-finite input")
    n = A.shape[-1]
    norm = np.max(np.sum(np.abs(A), axis=-2)) if A.size else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    A = A / (2.0**squarings)

    eye = np.broadcast_to(np.eye(n), A.shape)
    result = eye.copy()
    term = eye.copy()
    # ||A|| <= 1/4: 18 terms is far below double rounding
    for k in range(1, 19):
        term = term @ A / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def eig_mags_3x3(M):
    """Eigenvalue magnitudes of a real 3x3 matrix, largest first.

    Solves the characteristic cubic directly (trigonometric form for three
    real roots, Cardano otherwise) and polishes real roots with Newton steps.
    """
    M = np.asarray(M, dtype=float)
    tr = M[0, 0] + M[1, 1] + M[2, 2]
    minors = (
        M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        + M[0, 0] * M[2, 2] - M[0, 2] * M[2, 0]
        + M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1]
    )
    det = float(np.linalg.det(M))
    # lambda^3 + c2 lambda^2 + c1 lambda + c0
    c2, c1, c0 = -tr, minors, -det
    roots = _cubic_roots(c2, c1, c0)
    mags = sorted((abs(z) for z in roots), reverse=True)
    return tuple(mags)


def _cubic_roots(c2, c1, c0):
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = max(1.0, abs(c2), abs(c1) ** 0.5, abs(c0) ** (1.0 / 3.0))

    if disc <= 1e-14 * scale**6:
        m = 2.0 * math.sqrt(max(-p, 0.0) / 3.0)
        if p * m == 0.0:
            # triple root (p == q == 0 up to rounding)
            t = -math.copysign(abs(q) ** (1.0 / 3.0), q)
            roots = [t - shift] * 3
        else:
            arg = 3.0 * q / (p * m)
            arg = min(1.0, max(-1.0, arg))
            theta = math.acos(arg) / 3.0
            roots = [m * math.cos(theta - 2.0 * math.pi * k / 3.0) - shift for k in range(3)]
        return [_newton_polish(r, c2, c1, c0) for r in roots]

    sq = math.sqrt(disc)
    u = _cbrt(-q / 2.0 + sq)
    v = _cbrt(-q / 2.0 - sq)
    real = _newton_polish(u + v - shift, c2, c1, c0)
    # remaining quadratic after deflating the real root
    b = c2 + real
    c = c1 + real * b
    half = -b / 2.0
    rad = half * half - c
    if rad >= 0.0:
        r = math.sqrt(rad)
        return [real, half + r, half - r]
    im = math.sqrt(-rad)
    return [real, complex(half, im), complex(half, -im)]


def _cbrt(x):
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _newton_polish(x, c2, c1, c0, steps=3):
    for _ in range(steps):
        f = ((x + c2) * x + c1) * x + c0
        df = (3.0 * x + 2.0 * c2) * x + c1
        if df == 0.0:
            break
        x_new = x - f / df
        if abs(((x_new + c2) * x_new + c1) * x_new + c0) >= abs(f):
            break
        x = x_new
    return x
