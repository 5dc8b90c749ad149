"""Vectorial GAMP decoder for sparse superposition codes.

The decoder alternates a linear output step through the operator (with the
Onsager correction), a channel-specific scalar output denoiser (g_out and its
derivative), a linear input step, and the sectionwise posterior-mean input
denoiser (g_in). Binary-channel output steps are evaluated through truncated
Gaussian moments written with erfcx so contradictory observations far in the
tails stay finite.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import erfc, erfcx

from .channels import likelihood_pair
from .message import hard_decision, mse, ser

__all__ = [
    "GampConfig",
    "GampState",
    "GampDivergenceError",
    "TrajectoryPoint",
    "g_in",
    "g_in_var",
    "g_out",
    "g_out_prime_neg",
    "decode",
]


@dataclass(frozen=True)
class GampConfig:
    """Iteration controls: max iterations, stop threshold on e_t, damping."""

    t_max: int = 200
    u: float = 1e-7
    damping: float = 0.0

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.u < 0:
            raise ValueError("stop threshold u must be >= 0")
        if not (0 <= self.damping < 1):
            raise ValueError("damping must lie in [0, 1)")


@dataclass
class GampState:
    """Snapshot of all per-iteration vectors, passed to decode's callback."""

    x_hat: np.ndarray
    tau_x: np.ndarray
    s: np.ndarray
    p: np.ndarray
    tau_p: np.ndarray
    r: np.ndarray
    tau_r: np.ndarray
    t: int
    e_t: float


class GampDivergenceError(RuntimeError):
    def __init__(self, iteration, message):
        super().__init__("GAMP diverged at iteration %d: %s" % (iteration, message))
        self.iteration = iteration


class TrajectoryPoint(NamedTuple):
    t: int
    e_t: float
    mse: Optional[float] = None
    ser: Optional[float] = None


# Variance floor applied to tau_p once section posteriors saturate to exact
# one-hot vectors (tau_x underflows to 0). Keeps g_out in its well-defined
# small-variance limit instead of dividing by zero.
_TAU_P_FLOOR = 1e-100

# Smallest aggregated Fisher information (sum of a^2 tau_s over a column)
# still treated as an informative update. Once a column's covering rows all
# saturate, applying the update replaces sharp beliefs with a near-uniform
# vector, because the belief feed-through (2 x_hat - 1) / (2 tau_r) vanishes
# for huge tau_r; sub-floor columns keep their current estimate instead.
# Working regimes sit at 1e-2 or more even for nearly useless channels.
_DENOM_FLOOR = 1e-6

# A refresh computed from a numerically saturated output step can replace a
# nearly decided estimate with a near-uniform one: once tau_p falls below the
# float64 underflow line for unit-scale residuals (exp(-z^2 / 2 tau_p) is 0
# for tau_p below ~6.6e-4 at |z| ~ 1), only the accidental near-boundary rows
# keep nonzero weight and the rebuilt beliefs no longer reflect the decided
# state. The exact fixed point sits beyond float64, so the guard compares
# each proposed change against the current posterior's own uncertainty: a
# consistent update moves the estimate on the scale of its variance mass
# (sum of tau_x per section), while a saturated refresh jumps orders of
# magnitude beyond it. Updates larger than _ERASE_RATIO times the variance
# mass are discarded and the decided iterate returned. Healthy dynamics never
# trip this: early rounds carry variance mass near 1 per section, plateaus
# and near-threshold wobbles keep it well above the observed changes, and in
# spatially coupled waves the still-soft blocks hold the average up.
_ERASE_RATIO = 1e3
_ERASE_V_FLOOR = 1e-12


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0) or not np.all(np.isfinite(tau)):
        raise ValueError("tau must be positive and finite")
    return tau


def g_in(r, tau, params):
    """Sectionwise posterior mean: softmax of (2r - 1)/(2 tau) per section."""
    r = np.asarray(r, dtype=float)
    tau = _check_tau(tau)
    a = (2.0 * r - 1.0) / (2.0 * tau)
    a = a.reshape(params.L, params.B)
    a -= a.max(axis=1, keepdims=True)
    w = np.exp(a)
    w /= w.sum(axis=1, keepdims=True)
    return w.reshape(-1)


def g_in_var(r, tau, params):
    """Componentwise posterior variance g (1 - g) of the section denoiser."""
    g = g_in(r, tau, params)
    return g * (1.0 - g)


def _g_out_pair(ch, p, y, tau):
    """(g_out, -g_out') evaluated together; shared by decode."""
    p = np.asarray(p, dtype=float)
    tau = _check_tau(tau)
    if ch.kind == "awgnc":
        y = np.asarray(y, dtype=float)
        inv = 1.0 / (tau + 1.0 / ch.snr)
        g = (y - p) * inv
        return g, inv * np.ones_like(p)

    l_neg, l_pos = likelihood_pair(ch, y)
    dead = (l_neg == 0) & (l_pos == 0)
    if np.any(dead):
        raise ValueError("observation with zero likelihood under both inputs at component %d" % np.argmax(dead))
    x = p / np.sqrt(2.0 * tau)
    g = np.empty_like(p)

    both = (l_neg > 0) & (l_pos > 0)
    if np.any(both):
        xb = x[both]
        # posterior over sign(z): masses l+ * P(z>0) and l- * P(z<0)
        p_pos = 0.5 * erfc(-xb)
        p_neg = 0.5 * erfc(xb)
        gauss = np.sqrt(tau[both] / (2.0 * math.pi)) * np.exp(-xb * xb)
        num = gauss * (l_pos[both] - l_neg[both])
        den = tau[both] * (l_pos[both] * p_pos + l_neg[both] * p_neg)
        g[both] = num / den
    pos_only = l_neg == 0
    if np.any(pos_only & ~dead):
        m = pos_only & ~dead
        g[m] = np.sqrt(2.0 / (math.pi * tau[m])) / erfcx(-x[m])
    neg_only = l_pos == 0
    if np.any(neg_only & ~dead):
        m = neg_only & ~dead
        g[m] = -np.sqrt(2.0 / (math.pi * tau[m])) / erfcx(x[m])

    mgp = g * (p + tau * g) / tau
    return g, mgp


def g_out(ch, p, y, tau):
    """Output denoiser (E[Z | p, y, tau] - p)/tau, componentwise."""
    return _g_out_pair(ch, p, y, tau)[0]


def g_out_prime_neg(ch, p, y, tau):
    """-dg_out/dp, the posterior variance deficit (tau - Var[Z])/tau^2."""
    return _g_out_pair(ch, p, y, tau)[1]


def decode(y, A, params, ch, cfg=None, truth=None, iter_callback=None):
    """Run GAMP; returns (scores, trajectory).

    scores is the final sectionwise posterior-mean vector x_hat. Each
    trajectory entry carries (t, e_t) plus per-iteration mse and ser when the
    true message is supplied (simulation mode). iter_callback, if given, is
    called with a GampState after every iteration.
    """
    if cfg is None:
        cfg = GampConfig()
    m_dim, n_dim = A.dims
    if n_dim != params.N:
        raise ValueError("operator N=%d does not match params N=%d" % (n_dim, params.N))
    y = np.asarray(y)
    if y.shape != (m_dim,):
        raise ValueError("observation length %r does not match operator M=%d" % (y.shape, m_dim))

    x_hat = np.zeros(params.N)
    tau_x = np.full(params.N, 1.0 / params.B)
    s = np.zeros(m_dim)
    d = cfg.damping
    trajectory = []

    for t in range(1, cfg.t_max + 1):
        tau_p = A.forward_sq(tau_x)
        tau_p = np.maximum(tau_p, _TAU_P_FLOOR)
        p = A.forward(x_hat) - tau_p * s
        g, tau_s = _g_out_pair(ch, p, y, tau_p)
        if d > 0 and t > 1:
            s = (1.0 - d) * g + d * s
        else:
            s = g
        # Individual tau_s entries go negative on contradicted observations of
        # the asymmetric binary channels (the posterior variance of z exceeds
        # the prior there); only the per-column aggregate must stay positive,
        # and zeroing the negative rows would bias it upward and make the
        # input-step variance overconfident. Sections touching a column whose
        # aggregate is not usably positive get no consistent refresh this
        # round; freeze them whole, which also keeps every section of x_hat
        # normalized. See _DENOM_FLOOR.
        denom = A.adjoint_sq(tau_s)
        if not np.all(np.isfinite(denom)):
            raise GampDivergenceError(t, "non-finite variance estimate")
        live = np.repeat((denom > _DENOM_FLOOR).reshape(params.L, params.B).all(axis=1), params.B)
        tau_r = np.where(live, 1.0 / np.where(live, denom, 1.0), 1.0)
        r_vec = x_hat + tau_r * A.adjoint(s)
        x_new = np.where(live, g_in(r_vec, tau_r, params), x_hat)
        if d > 0 and t > 1:
            x_new = (1.0 - d) * x_new + d * x_hat
        diff = x_new - x_hat
        e_t = float(diff @ diff) / params.L
        v_cur = float(tau_x.sum()) / params.L
        if e_t > _ERASE_RATIO * max(v_cur, _ERASE_V_FLOOR):
            break  # discard a saturated refresh; see _ERASE_RATIO above
        x_hat = x_new
        tau_x = x_hat * (1.0 - x_hat)

        point = TrajectoryPoint(t, e_t)
        if truth is not None:
            point = TrajectoryPoint(
                t,
                e_t,
                mse=mse(x_hat, truth),
                ser=ser(hard_decision(x_hat, params), truth),
            )
        trajectory.append(point)
        if iter_callback is not None:
            iter_callback(GampState(x_hat, tau_x, s, p, tau_p, r_vec, tau_r, t, e_t))
        if not np.isfinite(e_t):
            raise GampDivergenceError(t, "change metric e_t is not finite")
        if e_t < cfg.u:
            break
    return x_hat, trajectory
