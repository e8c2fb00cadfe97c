"""Vehicle and string stability analysis.

String stability uses the Tustin-discretized speed transfer function between
consecutive vehicles; vehicle stability uses the exact sampled closed loop of
a single follower (the predictor removes the dead time).
"""
import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import grid_peaks, tustin_basis_points
from .errors import ConfigurationError, EvaluationError
from .matrix_core import OWN_BLOCK, eig_mags_3x3, expm_gamma_closed, expm_numeric, int_expm_gamma

STRING_STABLE_TOL = 1e-6
GRID_POINTS = 20000
GRID_MIN = 1e-4
BISECT_TOL = 1e-3

_BLOCK = np.ix_(OWN_BLOCK, OWN_BLOCK)


@dataclass(frozen=True)
class ContinuousTF:
    alpha: float
    b: float
    c: float
    h: float
    tau: float
    tau_prev: float
    D: float
    D_prev: float

    @classmethod
    def from_vehicles(cls, p_ego, p_prev, gains):
        return cls(gains.alpha, gains.b, gains.c, p_ego.headway, p_ego.tau,
                   p_prev.tau, p_ego.delay, p_prev.delay)

    def numerator(self):
        """Coefficients ``(s^2, s, 1)`` of the delay-free part of delta_i(s)."""
        return _numerator(self.alpha, self.b, self.c, self.h, self.tau_prev, self.D - self.D_prev)

    def denominator(self):
        """Coefficients ``(s^3, s^2, s, 1)``."""
        return (1.0, 1.0 / self.tau + self.c, self.alpha + self.b, self.alpha / self.h)


def _numerator(alpha, b, c, h, tau_prev, delta):
    k = alpha / h
    x2 = (k * tau_prev * delta + b * tau_prev - k * tau_prev**2
          + np.exp(-delta / tau_prev) * (k * tau_prev**2 - b * tau_prev + c))
    x1 = delta * k + b
    return x2, x1, k


def continuous_tf_eval(tf, omega, include_delay=True):
    """``G_hat(j omega)`` of the continuous closed loop."""
    s = 1j * omega
    x2, x1, x0 = tf.numerator()
    d3, d2, d1, d0 = tf.denominator()
    den = ((d3 * s + d2) * s + d1) * s + d0
    if den == 0:
        raise EvaluationError(f"closed-loop pole on the imaginary axis at omega={omega!r}")
    val = ((x2 * s + x1) * s + x0) / den
    if include_delay:
        val *= cmath.exp(-(tf.D - tf.D_prev) * s)
    return val


@dataclass(frozen=True)
class DiscreteTransferFunction:
    """Tustin image of the continuous speed transfer function.

    ``f``/``g`` are the expanded polynomial coefficients (highest power first).
    ``num``/``den`` hold the same polynomials in the Tustin basis
    ``(z-1)^k (z+1)^(3-k)``, which is what magnitude evaluation uses: at
    ``z = 1`` only the ``(z+1)^3`` terms survive and they are identical, so the
    DC gain is exactly one.
    """

    f: np.ndarray
    g: np.ndarray
    delay_exp: int
    Ts: float
    num: np.ndarray
    den: np.ndarray

    def evaluate(self, omega, include_delay=True):
        """Complex value from the expanded coefficients."""
        z = np.exp(1j * np.asarray(omega) * self.Ts)
        val = np.polyval(self.f, z) / np.polyval(self.g, z)
        if include_delay:
            val = val * z ** (-self.delay_exp)
        return val

    def magnitude(self, omega):
        x, y = tustin_basis_points(omega, self.Ts)
        return np.abs(_basis_ratio(self.num, self.den, x, y))

    def dc_gain(self):
        return float(self.num[2] / self.den[3])


def _basis_ratio(num, den, x, y):
    nv = ((num[0] * x + num[1] * y) * x + num[2] * y * y) * y
    dv = ((den[0] * x + den[1] * y) * x + den[2] * y * y) * x + den[3] * y**3
    return nv / dv


def tustin_basis(alpha, b, c, h, tau, tau_prev, delta, Ts):
    """Tustin-basis weights of numerator (3) and denominator (4); broadcasts."""
    alpha, b, c, h, tau, tau_prev, delta = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (alpha, b, c, h, tau, tau_prev, delta)))
    x2, x1, _ = _numerator(alpha, b, c, h, tau_prev, delta)
    dc = alpha * tau * Ts**3
    num = np.stack([4.0 * x2 * h * tau * Ts, 2.0 * x1 * h * tau * Ts**2, dc], axis=-1)
    den = np.stack([
        8.0 * h * tau,
        4.0 * (h + c * h * tau) * Ts,
        2.0 * (alpha + b) * h * tau * Ts**2,
        dc,
    ], axis=-1)
    return num, den


# rows: z^3 .. z^0 coefficients of each basis polynomial
_NUM_EXPAND = np.array([[1.0, -1.0, -1.0, 1.0], [1.0, 1.0, -1.0, -1.0], [1.0, 3.0, 3.0, 1.0]])
_DEN_EXPAND = np.vstack([[1.0, -3.0, 3.0, -1.0], _NUM_EXPAND])


def tustin_coefficients(alpha, b, c, h, tau, tau_prev, delta, Ts):
    """Expanded ``f``, ``g`` coefficients (highest power first); broadcasts."""
    num, den = tustin_basis(alpha, b, c, h, tau, tau_prev, delta, Ts)
    return num @ _NUM_EXPAND, den @ _DEN_EXPAND


def tustin_tf(p_ego, p_prev, gains):
    if abs(p_ego.Ts - p_prev.Ts) > 1e-15:
        raise ConfigurationError("vehicles must share Ts")
    args = (gains.alpha, gains.b, gains.c, p_ego.headway, p_ego.tau,
            p_prev.tau, p_ego.delay - p_prev.delay, p_ego.Ts)
    num, den = tustin_basis(*args)
    return DiscreteTransferFunction(num @ _NUM_EXPAND, den @ _DEN_EXPAND,
                                    p_ego.l - p_prev.l, p_ego.Ts, num, den)


def frequency_grid(Ts, points=GRID_POINTS, w_min=GRID_MIN):
    """Log-spaced grid over ``[w_min, pi/Ts]`` ending exactly at Nyquist."""
    w_max = math.pi / Ts
    grid = np.logspace(math.log10(w_min), math.log10(w_max), points)
    grid[-1] = w_max
    return grid


def _golden_max(fun, lo, hi, tol=1e-10, max_iter=200):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = fun(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = fun(x1)
    return max(f1, f2)


def _sup_magnitudes(num, den, Ts, grid):
    """sup over the grid and the DC point, with a golden refinement of the best cell."""
    num = np.atleast_2d(num)
    den = np.atleast_2d(den)
    peaks, args = grid_peaks(num, den, grid, Ts)
    dc = np.abs(num[:, 2] / den[:, 3])
    out = np.maximum(peaks, dc)
    last = len(grid) - 1
    for row in np.nonzero(peaks >= dc)[0]:
        k = args[row]
        lo = grid[k - 1] if k > 0 else 0.0
        hi = grid[k + 1] if k < last else grid[last]
        nr, dr = num[row], den[row]

        def mag(w, nr=nr, dr=dr):
            x, y = tustin_basis_points(w, Ts)
            return abs(_basis_ratio(nr, dr, x, y))

        out[row] = max(out[row], _golden_max(mag, lo, hi))
    return out


def string_stability_margin(tf, grid=None):
    """``sup_omega |G(e^{j omega Ts})|``; the pure delay has unit modulus and is skipped."""
    if grid is None:
        grid = frequency_grid(tf.Ts)
    return float(_sup_magnitudes(tf.num, tf.den, tf.Ts, grid)[0])


def is_string_stable(margin, tol=STRING_STABLE_TOL):
    return margin <= 1.0 + tol


def _closed_loop_factors(tau, alpha, b, c, h):
    B = np.array([0.0, 0.0, 1.0 / tau])
    K = np.array([tau * alpha / h, -tau * (alpha + b), -tau * c])
    return np.outer(B, K)


def vehicle_stability_matrix(p, gains, Ts=None):
    """Sampled closed-loop matrix of one predictor-controlled follower."""
    Ts = p.Ts if Ts is None else Ts
    E = expm_gamma_closed(p.tau, p.tau, Ts)[_BLOCK]
    # E @ int_0^Ts exp(-A w) dw, formed without the exp(Ts/tau) intermediates
    EW = int_expm_gamma(p.tau, p.tau, Ts)[_BLOCK]
    BK = _closed_loop_factors(p.tau, gains.alpha, gains.b, gains.c, p.headway)
    return E + EW @ BK


def vehicle_stability_matrix_numeric(p, gains, Ts=None):
    """Same matrix built from series exponentials (augmented-matrix integral)."""
    Ts = p.Ts if Ts is None else Ts
    A = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0 / p.tau]])
    aug = np.zeros((6, 6))
    aug[:3, :3] = A
    aug[:3, 3:] = np.eye(3)
    # top blocks of exp(aug Ts) are exp(A Ts) and int_0^Ts exp(A w) dw
    block = expm_numeric(aug, Ts)
    BK = _closed_loop_factors(p.tau, gains.alpha, gains.b, gains.c, p.headway)
    return block[:3, :3] + block[:3, 3:] @ BK


def max_eig_magnitude(p, gains, Ts=None):
    return eig_mags_3x3(vehicle_stability_matrix(p, gains, Ts))[0]


@dataclass
class AlphaBField:
    alphas: np.ndarray
    bs: np.ndarray
    margin: np.ndarray  # (len(alphas), len(bs))
    stable: np.ndarray


def sweep_alpha_b(p_ego, p_prev, gains, alphas, bs, grid=None):
    alphas = np.asarray(alphas, dtype=float)
    bs = np.asarray(bs, dtype=float)
    if np.any(alphas <= 0) or np.any(bs <= 0):
        raise ConfigurationError("alpha and b ranges must be positive")
    A, B = np.meshgrid(alphas, bs, indexing="ij")
    num, den = tustin_basis(A.ravel(), B.ravel(), gains.c, p_ego.headway, p_ego.tau,
                            p_prev.tau, p_ego.delay - p_prev.delay, p_ego.Ts)
    if grid is None:
        grid = frequency_grid(p_ego.Ts)
    margin = _sup_magnitudes(num, den, p_ego.Ts, grid).reshape(A.shape)
    return AlphaBField(alphas, bs, margin, margin <= 1.0 + STRING_STABLE_TOL)


def sweep_delay_diff(p_ego, p_prev, gains, deltas, grid=None):
    """Margin as a function of ``D_i - D_{i-1}`` with everything else fixed."""
    deltas = np.asarray(deltas, dtype=float)
    Ts = p_ego.Ts
    for d in deltas:
        n = round(d / Ts)
        if abs(n * Ts - d) > 1e-9 * max(1.0, abs(d)):
            raise ConfigurationError(f"delay difference {d!r} is off the Ts grid")
        if p_prev.delay + d < -1e-12:
            raise ConfigurationError(f"delay difference {d!r} makes D_i negative")
    num, den = tustin_basis(gains.alpha, gains.b, gains.c, p_ego.headway, p_ego.tau,
                            p_prev.tau, deltas, Ts)
    if grid is None:
        grid = frequency_grid(Ts)
    return _sup_magnitudes(num, den, Ts, grid)


@dataclass
class TsSweep:
    Ts: np.ndarray
    max_eig: np.ndarray
    threshold: Optional[float]


def sweep_Ts(p, gains, ts_values):
    """Largest eigenvalue magnitude vs sampling period, plus the first crossing of 1."""
    ts_values = np.asarray(ts_values, dtype=float)
    if np.any(ts_values <= 0):
        raise ConfigurationError("Ts values must be positive")
    curve = np.array([max_eig_magnitude(p, gains, ts) for ts in ts_values])
    threshold = None
    above = np.nonzero(curve >= 1.0)[0]
    if above.size and above[0] > 0:
        k = above[0]
        lo, hi = ts_values[k - 1], ts_values[k]
        while hi - lo > BISECT_TOL / 4:
            mid = 0.5 * (lo + hi)
            if max_eig_magnitude(p, gains, mid) >= 1.0:
                hi = mid
            else:
                lo = mid
        threshold = 0.5 * (lo + hi)
    return TsSweep(ts_values, curve, threshold)
