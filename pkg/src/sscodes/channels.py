"""Memoryless channels applied componentwise to the codeword.

The AWGN channel acts on the real codeword value z. The three binary-input
channels (erasure, Z, binary symmetric) act on sign(z), with sign(0) := +1 so
sampling stays deterministic. Outputs are reals for AWGN and integers in
{-1, 0, +1} for the binary channels.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelModel",
    "sample_output",
    "capacity",
    "log_likelihood",
    "parse_channel",
    "likelihood_pair",
    "output_alphabet",
]

KINDS = ("awgnc", "bec", "zc", "bsc")


@dataclass(frozen=True)
class ChannelModel:
    """Tagged channel family with a single noise parameter.

    kind "awgnc": param is snr > 0, y = z + noise of variance 1/snr.
    kind "bec":   param is the erasure probability eps; y in {-1, 0, +1}.
    kind "zc":    param is eps, the flip probability of the -1 input only;
                  the +1 input passes noiselessly; y in {-1, +1}.
    kind "bsc":   param is the flip probability eps; y in {-1, +1}.
    """

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError("unknown channel kind %r (expected one of %s)" % (self.kind, ", ".join(KINDS)))
        if self.kind == "awgnc":
            if not self.param > 0:
                raise ValueError("awgnc snr must be > 0")
        else:
            if not (0 <= self.param < 1):
                raise ValueError("%s eps must lie in [0, 1)" % self.kind)

    @property
    def is_binary(self):
        return self.kind != "awgnc"

    @property
    def snr(self):
        assert self.kind == "awgnc"
        return self.param

    @property
    def eps(self):
        assert self.kind != "awgnc"
        return self.param


def output_alphabet(ch):
    """Discrete output alphabet, or None for the continuous-output AWGN channel."""
    if ch.kind == "awgnc":
        return None
    if ch.kind == "bec":
        return (-1, 0, 1)
    return (-1, 1)


def _sign_pm1(z):
    # sign with the 0 -> +1 convention
    return np.where(np.asarray(z, dtype=float) >= 0, 1, -1)


def sample_output(ch, z, rng):
    """Draw one channel output per codeword component.

    Returns a float array for AWGN, an int array for the binary channels.
    """
    gen = np.random.default_rng(rng)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("codeword contains non-finite values")
    if ch.kind == "awgnc":
        return z + gen.standard_normal(z.shape) / math.sqrt(ch.snr)
    s = _sign_pm1(z)
    u = gen.random(z.shape)
    if ch.kind == "bec":
        return np.where(u < ch.eps, 0, s).astype(np.int64)
    if ch.kind == "bsc":
        return np.where(u < ch.eps, -s, s).astype(np.int64)
    # Z channel: -1 flips to +1 with probability eps, +1 is noiseless
    return np.where((s < 0) & (u < ch.eps), 1, s).astype(np.int64)


def _h2(p):
    """Binary entropy in bits."""
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def _mutual_information_2x2(trans):
    """Mutual information in bits of a binary-input channel under uniform inputs.

    trans[x][y] = P(y | input x), rows summing to 1.
    """
    trans = np.asarray(trans, dtype=float)
    p_y = trans.mean(axis=0)
    info = 0.0
    for row in trans:
        for p_yx, py in zip(row, p_y):
            if p_yx > 0:
                info += 0.5 * p_yx * math.log2(p_yx / py)
    return info


def capacity(ch):
    """Reference rate in bits per channel use.

    For the Z channel this is the uniform-input (symmetric) mutual
    information, matching the sign-mapped setting in which both inputs are
    equiprobable.
    """
    if ch.kind == "awgnc":
        return 0.5 * math.log2(1 + ch.snr)
    if ch.kind == "bec":
        return 1.0 - ch.eps
    if ch.kind == "bsc":
        return 1.0 - _h2(ch.eps)
    # zc: inputs -1, +1 with P(y=+1 | -1) = eps
    return _mutual_information_2x2([[1 - ch.eps, ch.eps], [0.0, 1.0]])


def _discrete_mass(ch, y, s):
    """P(y | sign s) for the binary channels; y must be in the alphabet."""
    if ch.kind == "bec":
        if y == 0:
            return ch.eps
        if y in (-1, 1):
            return (1.0 - ch.eps) if y == s else 0.0
    elif ch.kind == "bsc":
        if y in (-1, 1):
            return (1.0 - ch.eps) if y == s else ch.eps
    elif ch.kind == "zc":
        if y in (-1, 1):
            if s > 0:
                return 1.0 if y == 1 else 0.0
            return ch.eps if y == 1 else 1.0 - ch.eps
    raise ValueError("output %r is not in the %s alphabet" % (y, ch.kind))


def log_likelihood(ch, y, z):
    """log P(y | z) for a single component; -inf for zero-probability events."""
    if ch.kind == "awgnc":
        y = float(y)
        return 0.5 * math.log(ch.snr / (2 * math.pi)) - 0.5 * ch.snr * (y - float(z)) ** 2
    mass = _discrete_mass(ch, int(y), 1 if z >= 0 else -1)
    return math.log(mass) if mass > 0 else -math.inf


def likelihood_pair(ch, y):
    """Likelihoods (P(y | input -1), P(y | input +1)) for binary channels, vectorized.

    Used by the output denoiser: the posterior over the pre-channel value z
    only depends on y through these two numbers.
    """
    if ch.kind == "awgnc":
        raise ValueError("likelihood_pair is defined for binary-input channels only")
    y = np.asarray(y)
    eps = ch.eps
    if ch.kind == "bec":
        valid = np.isin(y, (-1, 0, 1))
    else:
        valid = np.isin(y, (-1, 1))
    if not np.all(valid):
        bad = np.flatnonzero(~valid)
        raise ValueError(
            "output value %r at component %d is not in the %s alphabet" % (y.flat[bad[0]], bad[0], ch.kind)
        )
    if ch.kind == "bec":
        l_neg = np.select([y == -1, y == 0], [1 - eps, eps], default=0.0)
        l_pos = np.select([y == 1, y == 0], [1 - eps, eps], default=0.0)
    elif ch.kind == "bsc":
        l_neg = np.where(y == -1, 1 - eps, eps)
        l_pos = np.where(y == 1, 1 - eps, eps)
    else:  # zc
        l_neg = np.where(y == 1, eps, 1 - eps)
        l_pos = np.where(y == 1, 1.0, 0.0)
    return np.asarray(l_neg, dtype=float), np.asarray(l_pos, dtype=float)


def parse_channel(spec):
    """Parse a channel spec string such as "awgnc:snr=100" or "bec:eps=0.1"."""
    if not isinstance(spec, str) or ":" not in spec:
        raise ValueError("channel spec must look like 'kind:param=value', got %r" % (spec,))
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    name, _, value = rest.partition("=")
    name = name.strip()
    expected = "snr" if kind == "awgnc" else "eps"
    if kind not in KINDS:
        raise ValueError("unknown channel kind %r in spec %r" % (kind, spec))
    if name != expected:
        raise ValueError("channel %s takes parameter %r, got %r" % (kind, expected, name))
    try:
        param = float(value)
    except ValueError:
        raise ValueError("cannot parse channel parameter value %r" % (value,)) from None
    return ChannelModel(kind, param)


def format_channel(ch):
    """Inverse of parse_channel, used for config echo lines."""
    name = "snr" if ch.kind == "awgnc" else "eps"
    return "%s:%s=%r" % (ch.kind, name, ch.param)
