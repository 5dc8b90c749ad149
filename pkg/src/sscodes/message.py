"""Sectioned one-hot messages: generation, hard decision and error metrics.

A message consists of L sections of size B. Each section carries exactly one
nonzero entry (value 1) whose position encodes a symbol, so the dense signal
x has length N = L*B and squared norm L.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CodeParams",
    "SectionedMessage",
    "random_message",
    "to_dense",
    "hard_decision",
    "mse",
    "ser",
]


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CodeParams:
    """Code geometry: L sections of size B mapped to M channel uses.

    B is restricted to powers of two so a single code path is valid for both
    the Gaussian and the Hadamard operator families.

    Attributes
    ----------
    L : section count
    B : section size (power of two >= 2)
    M : codeword length
    """

    L: int
    B: int
    M: int

    def __post_init__(self):
        if int(self.L) < 1:
            raise ValueError("L must be a positive integer")
        if int(self.B) < 2 or not _is_power_of_two(int(self.B)):
            raise ValueError("B must be a power of two >= 2, got %r" % (self.B,))
        if int(self.M) < 1:
            raise ValueError("M must be a positive integer")

    @property
    def N(self):
        """Signal length L*B."""
        return self.L * self.B

    @property
    def b2(self):
        """log2(B), exact for powers of two."""
        return float(np.log2(self.B))

    @property
    def rate(self):
        """Design rate L*log2(B)/M in bits per channel use."""
        return self.L * self.b2 / self.M


@dataclass(frozen=True, eq=False)
class SectionedMessage:
    """L symbols, one per section; positions[l] is the index of the 1 in section l."""

    params: CodeParams
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        if pos.shape != (self.params.L,):
            raise ValueError("positions must have shape (L,) = (%d,)" % self.params.L)
        if pos.size and (pos.min() < 0 or pos.max() >= self.params.B):
            raise ValueError("positions must lie in [0, B)")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __eq__(self, other):
        if not isinstance(other, SectionedMessage):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.positions, other.positions)

    def __hash__(self):
        return hash((self.params, self.positions.tobytes()))


def random_message(params, rng):
    """Draw a message with each section symbol i.i.d. uniform over [0, B).

    rng may be an integer seed or a numpy Generator.
    """
    gen = np.random.default_rng(rng)
    return SectionedMessage(params, gen.integers(0, params.B, size=params.L))


def to_dense(msg):
    """Expand a message to its {0,1}-valued signal vector of length N."""
    p = msg.params
    x = np.zeros(p.N)
    x[np.arange(p.L) * p.B + msg.positions] = 1.0
    return x


def hard_decision(scores, params):
    """Per section, pick the position of the largest score.

    Ties break to the lowest index. NaN scores are rejected.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (params.N,):
        raise ValueError("scores must have shape (N,) = (%d,)" % params.N)
    if np.isnan(scores).any():
        raise ValueError("scores contain NaN")
    # np.argmax returns the first maximal index, which is the tie-break rule
    pos = scores.reshape(params.L, params.B).argmax(axis=1)
    return SectionedMessage(params, pos)


def mse(estimate, truth):
    """Per-section mean squared error ||estimate - x||^2 / L."""
    estimate = np.asarray(estimate, dtype=float)
    x = to_dense(truth)
    if estimate.shape != x.shape:
        raise ValueError("estimate length %d does not match N = %d" % (estimate.size, x.size))
    d = estimate - x
    return float(d @ d) / truth.params.L


def ser(decoded, truth):
    """Fraction of sections whose decoded symbol differs from the truth."""
    if decoded.params != truth.params:
        raise ValueError("decoded and truth have different code parameters")
    return float(np.mean(decoded.positions != truth.positions))
