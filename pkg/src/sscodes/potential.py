"""Potential function of the section MSE: F_u(E) = U_u(E) - S_u(Sigma(E)).

Stationary points of F_u are fixed points of state evolution; its global
minimizer is the asymptotic MMSE. The rate at which the two local minima have
equal depth is the potential threshold R_pot. Only minima locations and depth
differences carry meaning, never absolute values of F_u.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.integrate
import scipy.optimize
from scipy.special import logsumexp, ndtr, xlogy

from .channels import ChannelModel, likelihood_pair, output_alphabet
from .se import _freeze_rng, sigma

__all__ = [
    "PotentialCurve",
    "phi",
    "u_pot",
    "s_pot",
    "f_pot",
    "default_e_grid",
    "potential_curve",
    "find_minima",
    "r_pot",
]

_LOG2 = math.log(2.0)


def phi(ch, y, Z, E):
    """Output density given the section's standardized overlap variable Z.

    phi(y|Z,E) integrates the channel over the pre-channel value
    s ~ N(Z sqrt(1-E), E). Vectorized over Z.
    """
    if not 0 < E <= 1:
        raise ValueError("E must lie in (0, 1]")
    z = np.asarray(Z, dtype=float)
    mu = z * math.sqrt(1.0 - E)
    if ch.kind == "awgnc":
        var = E + 1.0 / ch.snr
        out = np.exp(-((y - mu) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    else:
        q_pos = ndtr(mu / math.sqrt(E))
        l_neg, l_pos = likelihood_pair(ch, np.asarray(y))
        out = float(l_neg) * (1.0 - q_pos) + float(l_pos) * q_pos
    return out if np.ndim(Z) else float(out)


def _neg_output_entropy(ch, z, E):
    """sum_y phi log2 phi at a given Z (nonpositive); binary channels only."""
    total = 0.0
    for y in output_alphabet(ch):
        ph = phi(ch, y, z, E)
        total += xlogy(ph, ph) / _LOG2
    return total


@lru_cache(maxsize=65536)
def _z_avg_entropy_quad(ch, E):
    """E_Z[sum_y phi log2 phi] by adaptive quadrature; R-independent, cached.

    The integrand varies on scale sqrt(E/(1-E)) near Z=0, so segment ends are
    anchored there; plain wide-node quadrature would step over that feature
    at small E.
    """
    split = min(1.0, max(1e-3, 10.0 * math.sqrt(E / max(1.0 - E, 1e-12))))

    def integrand(z):
        return _neg_output_entropy(ch, z, E) * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    total = 0.0
    for a, b in [(-np.inf, -split), (-split, 0.0), (0.0, split), (split, np.inf)]:
        val, _ = scipy.integrate.quad(integrand, a, b, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += val
    return total


def u_pot(ch, R, B, E, n_samples=20000, rng=0, method="quad"):
    """Energy term: -E/(2 ln2 Sigma^2) - (1/R) E_Z[sum_y phi log2 phi].

    The outer average over Z ~ N(0,1) is a closed form for the AWGN channel,
    adaptive quadrature by default for binary channels (method="quad"), or
    Monte Carlo (method="mc"). B is accepted for signature uniformity with
    the other potential terms; the energy does not depend on it.
    """
    del B
    sv = sigma(ch, R, E)
    first = 0.0 if math.isinf(sv) else -E / (2.0 * _LOG2 * sv * sv)
    if ch.kind == "awgnc":
        # sum_y phi log2 phi = -(differential entropy of N(mu, E + 1/snr)), Z-free
        var = E + 1.0 / ch.snr
        return first + 0.5 * math.log2(2.0 * math.pi * math.e * var) / R

    if method == "quad":
        return first - _z_avg_entropy_quad(ch, float(E)) / R
    if method == "mc":
        gen = np.random.default_rng(rng)
        z = gen.standard_normal(int(n_samples))
        vals = np.zeros_like(z)
        for y in output_alphabet(ch):
            ph = phi(ch, y, z, E)
            vals += xlogy(ph, ph) / _LOG2
        return first - float(vals.mean()) / R
    raise ValueError("unknown method %r" % (method,))


def s_pot(B, sigma_val, n_samples=20000, rng=0, method="mc", return_stderr=False):
    """Entropy term: E_Z[log_B(1 + sum_{i>=2} exp((Z_i-Z_1)/x - 1/x^2))], x = Sigma/b.

    Monte Carlo by default; method="quad" reduces the B=2 case to a 1-D
    Gaussian quadrature (Z_2 - Z_1 is a single N(0,2) variable).
    """
    if sigma_val < 0:
        raise ValueError("sigma_val must be >= 0")
    if sigma_val == 0.0:
        return (0.0, 0.0) if return_stderr else 0.0
    if math.isinf(sigma_val):
        return (1.0, 0.0) if return_stderr else 1.0
    b = math.sqrt(math.log2(B))
    x = sigma_val / b

    if method == "quad":
        if B != 2:
            raise ValueError("quadrature path for s_pot is only available at B=2")

        def integrand(g):
            arg = math.sqrt(2.0) * g / x - 1.0 / (x * x)
            return np.logaddexp(0.0, arg) / _LOG2 * math.exp(-0.5 * g * g) / math.sqrt(2.0 * math.pi)

        g0 = 1.0 / (math.sqrt(2.0) * x)  # where the exponent changes sign
        total = 0.0
        for a, c in [(-np.inf, min(g0, 0.0)), (min(g0, 0.0), max(g0, 0.0)), (max(g0, 0.0), np.inf)]:
            if a == c:
                continue
            val, _ = scipy.integrate.quad(integrand, a, c, epsabs=1e-12, epsrel=1e-10, limit=200)
            total += val
        return (total, 0.0) if return_stderr else total
    if method == "mc":
        gen = np.random.default_rng(rng)
        z = gen.standard_normal((int(n_samples), B))
        arg = (z[:, 1:] - z[:, :1]) / x - 1.0 / (x * x)
        samples = np.logaddexp(0.0, logsumexp(arg, axis=1)) / math.log(B)
        value = float(samples.mean())
        if return_stderr:
            return value, float(samples.std(ddof=1) / math.sqrt(len(samples)))
        return value
    raise ValueError("unknown method %r" % (method,))


def f_pot(ch, R, B, E, n_samples=20000, rng=0, su_method=None):
    """Potential F_u(E) = U_u(E) - S_u(Sigma(E)); deterministic given the seed.

    su_method defaults to the exact 1-D quadrature at B=2 and Monte Carlo
    otherwise. Pass the same integer seed across E values for a smooth curve
    (common random numbers).
    """
    if su_method is None:
        su_method = "quad" if B == 2 else "mc"
    sv = sigma(ch, R, E)
    u_val = u_pot(ch, R, B, E)
    s_val = s_pot(B, sv, n_samples=n_samples, rng=_freeze_rng(rng), method=su_method)
    return u_val - s_val


def default_e_grid():
    """400 log-spaced points on [1e-6, 0.1] plus 300 linear points on (0.1, 1]."""
    low = np.geomspace(1e-6, 0.1, 400)
    high = np.linspace(0.1, 1.0, 301)[1:]
    return np.concatenate([low, high])


def find_minima(e_grid, f_vals, refine=None, xtol=1e-7):
    """Local minima of a sampled curve, optionally golden-section refined.

    refine, if given, is the callable E -> F used for refinement of interior
    minima (it must be deterministic; pass a seed-frozen f_pot closure).
    Boundary minima are reported at the grid edge. Returns [(E, F), ...]
    sorted by E.
    """
    e = np.asarray(e_grid, dtype=float)
    f = np.asarray(f_vals, dtype=float)
    assert e.shape == f.shape and e.ndim == 1 and len(e) >= 1
    assert np.all(np.diff(e) > 0), "E grid must be strictly increasing"
    minima = []
    for i in range(len(e)):
        left = f[i - 1] if i > 0 else math.inf
        right = f[i + 1] if i < len(e) - 1 else math.inf
        if not (f[i] < left and f[i] <= right):
            continue
        if refine is not None and 0 < i < len(e) - 1:
            try:
                res = scipy.optimize.minimize_scalar(
                    refine, bracket=(e[i - 1], e[i], e[i + 1]), method="golden", options={"xtol": xtol}
                )
                if res.x is not None and e[i - 1] <= res.x <= e[i + 1]:
                    minima.append((float(res.x), float(res.fun)))
                    continue
            except Exception:
                pass
        minima.append((float(e[i]), float(f[i])))
    if len(minima) > 2:
        warnings.warn("found %d local minima; expected at most two" % len(minima), RuntimeWarning)
    return minima


@dataclass
class PotentialCurve:
    channel: ChannelModel
    R: float
    B: int
    grid: list  # [(E, F_u(E)), ...]
    minima: list  # [(E, F_u(E)), ...], at most two, sorted by E
    classification: str  # unique-min | hard-phase | post-transition


def _classify(minima):
    if len(minima) <= 1:
        return "unique-min"
    left, right = minima[0], minima[-1]
    return "hard-phase" if left[1] <= right[1] else "post-transition"


def potential_curve(ch, R, B, e_grid=None, n_samples=20000, rng=0, su_method=None):
    """Sample F_u on the E grid, locate and refine minima, classify the shape."""
    if e_grid is None:
        e_grid = default_e_grid()
    seed = _freeze_rng(rng)

    def f_of_e(e):
        return f_pot(ch, R, B, float(e), n_samples=n_samples, rng=seed, su_method=su_method)

    f_vals = [f_of_e(e) for e in e_grid]
    minima = find_minima(e_grid, f_vals, refine=f_of_e)
    if len(minima) > 2:
        keep = sorted(sorted(minima, key=lambda m: m[1])[:2])
        minima = keep
    return PotentialCurve(
        channel=ch,
        R=R,
        B=B,
        grid=list(zip((float(e) for e in e_grid), f_vals)),
        minima=minima,
        classification=_classify(minima),
    )


def r_pot(
    ch,
    B,
    rate_bracket,
    resolution=1e-3,
    depth_tol=1e-5,
    e_grid=None,
    n_samples=20000,
    rng=0,
    su_method=None,
):
    """Rate at which the two minima of F_u have equal depth, by bisection.

    The lower bracket end must put the global minimum on the low-E side, the
    upper end on the high-E side. Raises if no two-minima curve is ever seen
    (the channel noise may be too high for a hard phase to exist).
    """
    seed = _freeze_rng(rng)
    lo, hi = float(rate_bracket[0]), float(rate_bracket[1])
    if not lo < hi:
        raise ValueError("rate bracket must be increasing")
    saw_two = {"flag": False}

    def depth_gap(rate, n):
        """F(left min) - F(right min); negative means the left min is global."""
        curve = potential_curve(ch, rate, B, e_grid=e_grid, n_samples=n, rng=seed, su_method=su_method)
        if len(curve.minima) >= 2:
            saw_two["flag"] = True
            return curve.minima[0][1] - curve.minima[-1][1]
        # unique minimum: sign by which side of the grid it sits on
        e_min = curve.minima[0][0]
        return -math.inf if e_min < 0.1 else math.inf

    gap_lo = depth_gap(lo, n_samples)
    gap_hi = depth_gap(hi, n_samples)
    if not (gap_lo < 0 < gap_hi):
        raise ValueError(
            "rate bracket does not straddle the potential threshold (gaps %g, %g)" % (gap_lo, gap_hi)
        )
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        n = n_samples
        gap = depth_gap(mid, n)
        # near the equal-depth tolerance, sharpen the Monte Carlo estimate
        while abs(gap) < 10.0 * depth_tol and math.isfinite(gap) and su_method != "quad" and B != 2 and n < 8 * n_samples:
            n *= 2
            gap = depth_gap(mid, n)
        if abs(gap) < depth_tol:
            return mid
        if gap < 0:
            lo = mid
        else:
            hi = mid
    if not saw_two["flag"]:
        raise ValueError("no two-minima potential found in the bracket; no hard phase detected")
    return 0.5 * (lo + hi)
