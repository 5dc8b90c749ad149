"""State evolution for the GAMP decoder.

Tracks the per-section MSE E_t of the infinite-size decoder through the
scalar recursion E_{t+1} = T(E_t). The map T is the MMSE of a single section
observed through an effective Gaussian channel whose noise level Sigma(E) is
set by the Fisher information of the scalar channel p -> y.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.integrate
from scipy.special import expit, log_ndtr, logsumexp, ndtr

from .channels import ChannelModel, likelihood_pair, output_alphabet

__all__ = [
    "SeTrajectory",
    "fisher",
    "fisher_numeric",
    "sigma",
    "t_of_e",
    "se_run",
    "error_floor",
    "r_gamp",
    "count_sign_crossings",
]


@lru_cache(maxsize=8)
def _hermgauss(n):
    return np.polynomial.hermite.hermgauss(n)


def fisher(ch, p, E):
    """Fisher information of the mean parameter of f(y|p,E), closed form.

    f(y|p,E) is the channel output density when the pre-channel value is
    Gaussian with mean p and variance E. Vectorized over p.
    """
    if not E > 0:
        raise ValueError("E must be > 0")
    p = np.asarray(p, dtype=float)
    if ch.kind == "awgnc":
        return np.broadcast_to(1.0 / (1.0 / ch.snr + E), p.shape).copy() if p.shape else 1.0 / (1.0 / ch.snr + E)

    eps = ch.eps
    x = p / math.sqrt(E)
    log_q = log_ndtr(x)
    log_1q = log_ndtr(-x)
    log_qp = -0.5 * x * x - 0.5 * math.log(2.0 * math.pi * E)
    log_eps = math.log(eps) if eps > 0 else -math.inf

    if ch.kind == "bec":
        out = np.exp(math.log1p(-eps) + 2.0 * log_qp - log_q - log_1q)
    elif ch.kind == "bsc":
        if eps == 0.5:
            out = np.zeros_like(x)
        else:
            # masses f(+1) = eps + (1-2eps) Q and f(-1) = eps + (1-2eps)(1-Q)
            log_f_pos = np.logaddexp(log_eps, math.log(1.0 - 2.0 * eps) + log_q)
            log_f_neg = np.logaddexp(log_eps, math.log(1.0 - 2.0 * eps) + log_1q)
            out = np.exp(2.0 * math.log(1.0 - 2.0 * eps) + 2.0 * log_qp - log_f_pos - log_f_neg)
    else:  # zc: f(+1) = Q + eps (1-Q), f(-1) = (1-eps)(1-Q)
        log_f_pos = np.logaddexp(log_q, log_eps + log_1q)
        t_pos = np.exp(2.0 * math.log1p(-eps) + 2.0 * log_qp - log_f_pos)
        t_neg = np.exp(math.log1p(-eps) + 2.0 * log_qp - log_1q)
        out = t_pos + t_neg
    return out if out.shape else float(out)


def _f_numeric(ch, y, x, E):
    """Oracle density f(y|x,E) by direct quadrature over the pre-channel value."""

    def gauss(z):
        return np.exp(-((z - x) ** 2) / (2.0 * E)) / math.sqrt(2.0 * math.pi * E)

    if ch.kind == "awgnc":
        lo, hi = x - 40 * math.sqrt(E), x + 40 * math.sqrt(E)
        val, _ = scipy.integrate.quad(
            lambda z: gauss(z) * math.exp(-0.5 * ch.snr * (y - z) ** 2) * math.sqrt(ch.snr / (2 * math.pi)),
            lo,
            hi,
            points=(min(max(y, lo), hi),),  # the channel kernel spikes at z = y
            epsabs=1e-13,
            epsrel=1e-12,
            limit=200,
        )
        return val
    l_neg, l_pos = likelihood_pair(ch, np.asarray(y))
    mass_neg, _ = scipy.integrate.quad(gauss, -np.inf, 0.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    mass_pos, _ = scipy.integrate.quad(gauss, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(l_neg) * mass_neg + float(l_pos) * mass_pos


def _df_numeric(ch, y, x, E):
    """Oracle derivative of f(y|x,E) in x: score form, E[(Z-x)/E k(y|Z)]."""

    def weighted(z):
        gauss = np.exp(-((z - x) ** 2) / (2.0 * E)) / math.sqrt(2.0 * math.pi * E)
        return gauss * (z - x) / E

    if ch.kind == "awgnc":
        lo, hi = x - 40 * math.sqrt(E), x + 40 * math.sqrt(E)
        val, _ = scipy.integrate.quad(
            lambda z: weighted(z) * math.exp(-0.5 * ch.snr * (y - z) ** 2) * math.sqrt(ch.snr / (2 * math.pi)),
            lo,
            hi,
            points=(min(max(y, lo), hi),),  # the channel kernel spikes at z = y
            epsabs=1e-13,
            epsrel=1e-11,
            limit=200,
        )
        return val
    l_neg, l_pos = likelihood_pair(ch, np.asarray(y))
    d_neg, _ = scipy.integrate.quad(weighted, -np.inf, 0.0, epsabs=1e-13, epsrel=1e-11, limit=200)
    d_pos, _ = scipy.integrate.quad(weighted, 0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(l_neg) * d_neg + float(l_pos) * d_pos


def fisher_numeric(ch, p, E):
    """Quadrature oracle for fisher; test use only."""
    if not E > 0:
        raise ValueError("E must be > 0")
    p = float(p)

    if ch.kind == "awgnc":
        spread = 12.0 * math.sqrt(E + 1.0 / ch.snr)

        def integrand(y):
            f = _f_numeric(ch, y, p, E)
            if f < 1e-300:
                return 0.0
            return _df_numeric(ch, y, p, E) ** 2 / f

        val, _ = scipy.integrate.quad(integrand, p - spread, p + spread, epsabs=1e-9, epsrel=1e-7, limit=300)
        return val
    total = 0.0
    for y in output_alphabet(ch):
        f = _f_numeric(ch, y, p, E)
        if f > 1e-300:
            d = _df_numeric(ch, y, p, E)
            total += d * d / f
    return total


def _fisher_shape(ch, x):
    """W(x) with F(p|E) = Q'(p,E)^2 W(p/sqrt(E)); x kept in moderate range."""
    eps = ch.eps
    q = ndtr(x)
    q1 = ndtr(-x)
    if ch.kind == "bec":
        return (1.0 - eps) / (q * q1)
    if ch.kind == "bsc":
        f_pos = eps + (1.0 - 2.0 * eps) * q
        f_neg = 1.0 - f_pos
        return (1.0 - 2.0 * eps) ** 2 / (f_pos * f_neg)
    # zc
    return (1.0 - eps) ** 2 / (q + eps * q1) + (1.0 - eps) / q1


def _fisher_gauss_mass(ch, E, n_nodes=61):
    """integral of N(p|0,1-E) F(p|E) dp, exact Gaussian-weight folding.

    The product of the two Gaussian factors (the p-prior and Q'(p,E)^2) is
    folded analytically into the Gauss-Hermite weight so the quadrature only
    sees the smooth rational factor W. This keeps the 1/sqrt(E) spike of the
    integrand exact at small E, where sampling p from N(0, 1-E) alone would
    miss the narrow Fisher peak.
    """
    if ch.kind == "bsc" and ch.eps == 0.5:
        return 0.0
    if 1.0 - E < 1e-12:
        return float(fisher(ch, 0.0, E))
    u, w = _hermgauss(n_nodes)
    a = 1.0 / E + 0.5 / (1.0 - E)
    x = u / math.sqrt(a * E)  # |x| <= |u| since a*E >= 1
    vals = _fisher_shape(ch, x)
    pref = 1.0 / (2.0 * math.pi * E * math.sqrt(2.0 * math.pi * (1.0 - E)) * math.sqrt(a))
    return pref * float(w @ vals)


def sigma(ch, R, E, n_nodes=61):
    """Effective noise level of the single-section channel.

    sqrt(R) times the inverse square root of the Gaussian-averaged Fisher
    information. Returns +inf when the channel carries no information.
    """
    if not R > 0:
        raise ValueError("R must be > 0")
    if not 0 < E <= 1:
        raise ValueError("E must lie in (0, 1]")
    if ch.kind == "awgnc":
        return math.sqrt(R * (1.0 / ch.snr + E))
    mass = _fisher_gauss_mass(ch, E, n_nodes)
    if mass <= 0.0:
        return math.inf
    return math.sqrt(R / mass)


def _t_given_sigma(B, sigma_val, n_samples, rng):
    """Section MMSE under effective noise sigma_val, Monte Carlo over Z."""
    if sigma_val == 0.0:
        return 0.0
    if math.isinf(sigma_val):
        return (B - 1.0) / B
    b = math.sqrt(math.log2(B))
    beta = b / sigma_val
    gamma = beta * beta
    gen = np.random.default_rng(rng)
    z = gen.standard_normal((int(n_samples), B))
    logw = beta * (z[:, 1:] - z[:, :1]) - gamma  # wrong components relative to the sent one
    lse1 = logsumexp(logw, axis=1)
    lse2 = logsumexp(2.0 * logw, axis=1)
    one_minus_g1 = expit(lse1)  # total posterior mass on wrong components
    ratio = np.exp(lse2 - 2.0 * lse1)  # sum w^2 / (sum w)^2
    vals = one_minus_g1**2 * (1.0 + ratio)
    return float(vals.mean())


def t_of_e(ch, R, B, E, n_samples=20000, rng=0):
    """One step of the state evolution map."""
    if not 0 <= E <= 1:
        raise ValueError("E must lie in [0, 1]")
    if E == 0.0:
        return 0.0
    return _t_given_sigma(B, sigma(ch, R, E), n_samples, rng)


@dataclass
class SeTrajectory:
    R: float
    B: int
    channel: ChannelModel
    E_values: list
    fixed_point: float
    converged: bool


def _freeze_rng(rng):
    """Reduce rng to a reusable seed so repeated map evaluations share Z."""
    if rng is None:
        return 0
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2**63))
    return rng


def se_run(ch, R, B, E0=1.0, max_iter=500, tol=1e-8, n_samples=20000, rng=0):
    """Iterate E_{t+1} = T(E_t) to a fixed point, common random numbers throughout."""
    if not 0 <= E0 <= 1:
        raise ValueError("E0 must lie in [0, 1]")
    seed = _freeze_rng(rng)
    e = float(E0)
    values = [e]
    converged = False
    for _ in range(max_iter):
        e_next = t_of_e(ch, R, B, e, n_samples, seed)
        values.append(e_next)
        if abs(e_next - e) < tol:
            e = e_next
            converged = True
            break
        e = e_next
    return SeTrajectory(R=R, B=B, channel=ch, E_values=values, fixed_point=e, converged=converged)


def error_floor(ch, R, B, max_iter=500, tol=1e-8, n_samples=20000, rng=0):
    """Fixed point approached from the zero-error side (started at E0=1e-6)."""
    return se_run(ch, R, B, E0=1e-6, max_iter=max_iter, tol=tol, n_samples=n_samples, rng=rng).fixed_point


def count_sign_crossings(values, delta=0.0):
    """Sign changes in a sequence, with hysteresis: a crossing only counts
    once the sequence leaves the [-delta, delta] noise band on the new side."""
    state = 0
    crossings = 0
    for v in values:
        if v > delta:
            s = 1
        elif v < -delta:
            s = -1
        else:
            continue
        if state != 0 and s != state:
            crossings += 1
        state = s
    return crossings


def _fixed_point_scan(ch, R, B, n_samples, seed, delta=0.01):
    grid = np.concatenate([np.geomspace(1e-6, 0.1, 15), np.linspace(0.12, 1.0, 25)])
    diffs = [t_of_e(ch, R, B, float(e), n_samples, seed) - float(e) for e in grid]
    return count_sign_crossings(diffs, delta)


def r_gamp(
    ch,
    B,
    rate_bracket,
    resolution=1e-3,
    floor_tol=1e-4,
    max_iter=500,
    tol=1e-8,
    n_samples=20000,
    rng=0,
    check_fixed_points=True,
):
    """Highest rate at which state evolution from E0=1 reaches the error floor.

    Bisection on the rate; a rate is declared decodable when the fixed point
    from E0=1 lands within floor_tol of the error floor.
    """
    seed = _freeze_rng(rng)
    lo, hi = float(rate_bracket[0]), float(rate_bracket[1])
    if not lo < hi:
        raise ValueError("rate bracket must be increasing")

    def decodable(rate):
        floor = error_floor(ch, rate, B, max_iter=max_iter, tol=tol, n_samples=n_samples, rng=seed)
        top = se_run(ch, rate, B, E0=1.0, max_iter=max_iter, tol=tol, n_samples=n_samples, rng=seed).fixed_point
        return abs(top - floor) < floor_tol

    if not decodable(lo):
        raise ValueError("rate bracket does not straddle the transition: lower end %g is not decodable" % lo)
    if decodable(hi):
        raise ValueError("rate bracket does not straddle the transition: upper end %g is decodable" % hi)
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if decodable(mid):
            lo = mid
        else:
            hi = mid
    threshold = 0.5 * (lo + hi)
    if check_fixed_points:
        crossings = _fixed_point_scan(ch, threshold, B, n_samples, seed)
        if crossings >= 3:
            warnings.warn(
                "detected %d state-evolution fixed points near R=%.4f; the two-minima "
                "assumption behind the bisection may not hold" % (crossings, threshold),
                RuntimeWarning,
            )
    return threshold
