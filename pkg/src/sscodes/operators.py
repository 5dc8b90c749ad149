"""Coding operators: dense Gaussian, subsampled Hadamard, spatially coupled blocks.

Every operator exposes four linear maps used by the message-passing decoder:
forward (A v), adjoint (A^T u), forward_sq (A**2 v, entrywise squares), and
adjoint_sq ((A**2)^T u). The Gaussian operator applies exact squares; Hadamard
entries have constant magnitude so its squared map is an exact scalar rule;
the coupled operator uses the per-block variance rule (exact for Hadamard
blocks, a concentration surrogate for Gaussian blocks).
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .message import CodeParams

__all__ = [
    "CodingOperator",
    "GaussianOperator",
    "HadamardOperator",
    "CouplingParams",
    "CoupledOperator",
    "new_gaussian",
    "new_hadamard",
    "new_coupled",
    "parse_operator",
    "fwht",
]


def fwht(a):
    """In-place fast Walsh-Hadamard transform, Sylvester ordering, no scaling.

    a must be a float vector whose length is a power of two. Returns a.
    """
    n = a.size
    assert n & (n - 1) == 0 and n > 0
    h = 1
    while h < n:
        b = a.reshape(-1, 2 * h)
        lo = b[:, :h].copy()
        hi = b[:, h:]
        b[:, :h] = lo + hi
        b[:, h:] = lo - hi
        h *= 2
    return a


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


class CodingOperator(ABC):
    """Abstract M x N sensing operator with squared-entry companions."""

    @property
    @abstractmethod
    def dims(self):
        """(M, N)."""

    @abstractmethod
    def forward(self, v):
        """A v, v of length N -> length M."""

    @abstractmethod
    def adjoint(self, u):
        """A^T u, u of length M -> length N."""

    @abstractmethod
    def forward_sq(self, v):
        """(A**2) v or its variance surrogate."""

    @abstractmethod
    def adjoint_sq(self, u):
        """(A**2)^T u or its variance surrogate."""

    @abstractmethod
    def materialize(self):
        """Dense float64 (M, N) array; intended for small sizes and tests."""

    def _check_n(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dims[1],):
            raise ValueError("expected vector of length %d, got shape %r" % (self.dims[1], v.shape))
        return v

    def _check_m(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.dims[0],):
            raise ValueError("expected vector of length %d, got shape %r" % (self.dims[0], u.shape))
        return u


class GaussianOperator(CodingOperator):
    """Dense i.i.d. N(0, entry_var) matrix; default entry variance 1/L.

    dtype float32 halves memory and matvec traffic for the large instances;
    results are upcast to float64. The squared matrix is stored so repeated
    forward_sq/adjoint_sq calls cost one matvec each.
    """

    def __init__(self, params, seed, dtype=np.float64, entry_std=None):
        self.params = params
        self.seed = seed
        if entry_std is None:
            entry_std = 1.0 / math.sqrt(params.L)
        self.entry_std = float(entry_std)
        gen = np.random.default_rng(seed)
        a = gen.standard_normal((params.M, params.N), dtype=dtype)
        a *= self.entry_std  # in-place keeps dtype
        self._a = a
        self._a_sq = a * a

    @property
    def dims(self):
        return (self.params.M, self.params.N)

    def _mv(self, mat, v):
        out = mat @ v.astype(mat.dtype, copy=False)
        return out.astype(np.float64, copy=False)

    def forward(self, v):
        return self._mv(self._a, self._check_n(v))

    def adjoint(self, u):
        return self._mv(self._a.T, self._check_m(u))

    def forward_sq(self, v):
        return self._mv(self._a_sq, self._check_n(v))

    def adjoint_sq(self, u):
        return self._mv(self._a_sq.T, self._check_m(u))

    def materialize(self):
        return self._a.astype(np.float64)


class HadamardOperator(CodingOperator):
    """Random row-subsampled, column-permuted, sign-flipped Walsh-Hadamard matrix.

    A[m, j] = scale * sign_j * H[row_m, col_j] with H the N_H x N_H Sylvester
    matrix, N_H the smallest power of two >= N. Row 0 (all ones) is excluded.
    Entries all have magnitude scale, so the squared maps are exact scalar
    rules. Default scale 1/sqrt(L) enforces unit codeword power.
    """

    def __init__(self, params, seed, entry_std=None):
        self.params = params
        self.seed = seed
        n_h = _next_pow2(params.N)
        if params.M > n_h - 1:
            raise ValueError(
                "cannot draw %d distinct non-constant rows from a %d-point Hadamard transform" % (params.M, n_h)
            )
        if entry_std is None:
            entry_std = 1.0 / math.sqrt(params.L)
        self.entry_std = float(entry_std)
        self.n_h = n_h
        gen = np.random.default_rng(seed)
        self.rows = gen.choice(n_h - 1, size=params.M, replace=False) + 1
        self.cols = gen.permutation(n_h)[: params.N]
        self.signs = gen.integers(0, 2, size=params.N) * 2.0 - 1.0

    @property
    def dims(self):
        return (self.params.M, self.params.N)

    def forward(self, v):
        v = self._check_n(v)
        buf = np.zeros(self.n_h)
        buf[self.cols] = self.signs * v
        fwht(buf)
        return self.entry_std * buf[self.rows]

    def adjoint(self, u):
        u = self._check_m(u)
        buf = np.zeros(self.n_h)
        buf[self.rows] = u
        fwht(buf)  # H is symmetric
        return self.entry_std * self.signs * buf[self.cols]

    def forward_sq(self, v):
        v = self._check_n(v)
        return np.full(self.params.M, self.entry_std**2 * v.sum())

    def adjoint_sq(self, u):
        u = self._check_m(u)
        return np.full(self.params.N, self.entry_std**2 * u.sum())

    def materialize(self):
        h = scipy.linalg.hadamard(self.n_h).astype(np.float64)
        return self.entry_std * self.signs[None, :] * h[np.ix_(self.rows, self.cols)]


@dataclass(frozen=True)
class CouplingParams:
    """Banded block layout of a spatially coupled operator.

    l_c block-columns and l_r = l_c + 1 block-rows; block (r, c) is nonzero
    only for r - w_b <= c <= r + w_f. Diagonal blocks (c = r) have unit
    relative variance, off-diagonal in-band blocks have relative variance
    J = sqrt_j**2. The first block-row (the seed) gets beta_seed times the
    base row height.
    """

    l_c: int
    w_b: int
    w_f: int
    sqrt_j: float
    beta_seed: float = 1.0

    def __post_init__(self):
        if self.l_c < 1:
            raise ValueError("l_c must be >= 1")
        if self.w_b < 1 or self.w_f < 1:
            raise ValueError("coupling windows w_b, w_f must be >= 1")
        if not (0 < self.sqrt_j <= 1):
            raise ValueError("sqrt_j must lie in (0, 1]")
        if self.beta_seed < 1:
            raise ValueError("beta_seed must be >= 1")
        if max(self.w_b, self.w_f) > self.l_c:
            raise ValueError("coupling window exceeds chain length l_c=%d" % self.l_c)

    @property
    def l_r(self):
        return self.l_c + 1

    def in_band(self, r, c):
        return r - self.w_b <= c <= r + self.w_f

    def rel_var(self, r, c):
        if not self.in_band(r, c):
            return 0.0
        return 1.0 if r == c else self.sqrt_j**2


class CoupledOperator(CodingOperator):
    """Block-banded operator built from independent Gaussian or Hadamard blocks.

    Row heights: the seed row gets m_base rows scaled by beta_seed (taking the
    rounding remainder), the other l_c rows get m_base = floor(M / (l_c +
    beta_seed)) each. Column blocks split the N columns evenly over l_c (L
    must be divisible by l_c so sections never straddle blocks). Block (r, c)
    entry variance is alpha_c * rel_var(r, c) with alpha_c chosen so every
    column's total variance over rows is exactly M/L, which keeps the unit
    power constraint E||Ax||^2/M = 1 for one-hot-per-section messages.
    """

    def __init__(self, base, params, cp, seed):
        if base not in ("gaussian", "hadamard"):
            raise ValueError("base family must be 'gaussian' or 'hadamard', got %r" % (base,))
        if params.L % cp.l_c != 0:
            raise ValueError("L=%d not divisible by l_c=%d" % (params.L, cp.l_c))
        self.base = base
        self.params = params
        self.cp = cp

        l_r, l_c = cp.l_r, cp.l_c
        m_base = int(params.M // (l_r - 1 + cp.beta_seed))
        if m_base < 1:
            raise ValueError("M=%d too small for %d block-rows" % (params.M, l_r))
        m_seed = params.M - (l_r - 1) * m_base
        self.row_heights = [m_seed] + [m_base] * (l_r - 1)
        self.row_offsets = np.concatenate([[0], np.cumsum(self.row_heights)])
        l_block = params.L // l_c
        n_block = l_block * params.B
        self.n_block = n_block
        self.col_offsets = np.arange(l_c + 1) * n_block

        # per-column-block normalization: sum_r M_r * var(r, c) == M/L
        var = np.zeros((l_r, l_c))
        for r in range(l_r):
            for c in range(l_c):
                var[r, c] = cp.rel_var(r, c)
        weighted = np.array(self.row_heights) @ var
        assert np.all(weighted > 0), "some block-column receives no rows; widen the band"
        alpha = (params.M / params.L) / weighted
        self.block_var = var * alpha[None, :]

        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        children = iter(root.spawn(l_r * l_c))
        self.blocks = {}
        for r in range(l_r):
            for c in range(l_c):
                child = next(children)
                if self.block_var[r, c] == 0.0:
                    continue
                bp = CodeParams(L=l_block, B=params.B, M=self.row_heights[r])
                std = math.sqrt(self.block_var[r, c])
                if base == "gaussian":
                    self.blocks[(r, c)] = GaussianOperator(bp, child, entry_std=std)
                else:
                    self.blocks[(r, c)] = HadamardOperator(bp, child, entry_std=std)

    @property
    def dims(self):
        return (self.params.M, self.params.N)

    def _col_slice(self, v, c):
        return v[self.col_offsets[c] : self.col_offsets[c + 1]]

    def _row_slice(self, u, r):
        return u[self.row_offsets[r] : self.row_offsets[r + 1]]

    def forward(self, v):
        v = self._check_n(v)
        out = np.zeros(self.params.M)
        for (r, c), blk in self.blocks.items():
            self._row_slice(out, r)[:] += blk.forward(self._col_slice(v, c))
        return out

    def adjoint(self, u):
        u = self._check_m(u)
        out = np.zeros(self.params.N)
        for (r, c), blk in self.blocks.items():
            self._col_slice(out, c)[:] += blk.adjoint(self._row_slice(u, r))
        return out

    def forward_sq(self, v):
        v = self._check_n(v)
        col_sums = np.add.reduceat(v, self.col_offsets[:-1])
        row_vals = self.block_var @ col_sums
        return np.repeat(row_vals, self.row_heights)

    def adjoint_sq(self, u):
        u = self._check_m(u)
        row_sums = np.add.reduceat(u, self.row_offsets[:-1])
        col_vals = self.block_var.T @ row_sums
        return np.repeat(col_vals, self.n_block)

    def materialize(self):
        a = np.zeros(self.dims)
        for (r, c), blk in self.blocks.items():
            a[
                self.row_offsets[r] : self.row_offsets[r + 1],
                self.col_offsets[c] : self.col_offsets[c + 1],
            ] = blk.materialize()
        return a


def new_gaussian(params, seed, dtype=np.float64):
    return GaussianOperator(params, seed, dtype=dtype)


def new_hadamard(params, seed):
    return HadamardOperator(params, seed)


def new_coupled(base, params, cp, seed):
    return CoupledOperator(base, params, cp, seed)


def parse_operator_spec(spec):
    """Validate an operator spec string without building the operator.

    Returns (family, base, coupling) where family is "gaussian", "hadamard",
    or "coupled"; base and coupling are None unless family is "coupled".
    """
    spec = spec.strip()
    if spec in ("gaussian", "hadamard"):
        return spec, None, None
    if spec.startswith("coupled:"):
        body = spec[len("coupled:") :]
        parts = [s.strip() for s in body.split(",") if s.strip()]
        if not parts or "=" in parts[0]:
            raise ValueError("coupled spec must start with the base family, e.g. 'coupled:hadamard,...'")
        base = parts[0]
        if base not in ("gaussian", "hadamard"):
            raise ValueError("coupled base family must be 'gaussian' or 'hadamard', got %r" % (base,))
        kv = {}
        for part in parts[1:]:
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError("bad coupled parameter %r (expected key=value)" % (part,))
            kv[key.strip()] = value.strip()
        known = {"Lc", "wb", "wf", "J", "seed_beta"}
        unknown = set(kv) - known
        if unknown:
            raise ValueError("unknown coupled parameters: %s" % ", ".join(sorted(unknown)))
        cp = CouplingParams(
            l_c=int(kv.get("Lc", 1)),
            w_b=int(kv.get("wb", 1)),
            w_f=int(kv.get("wf", 1)),
            sqrt_j=math.sqrt(float(kv["J"])) if "J" in kv else 1.0,
            beta_seed=float(kv.get("seed_beta", 1.0)),
        )
        return "coupled", base, cp
    raise ValueError("unknown operator spec %r" % (spec,))


def parse_operator(spec, params, seed):
    """Build an operator from a spec string.

    "gaussian", "hadamard", or
    "coupled:hadamard,Lc=16,wb=3,wf=1,J=0.09,seed_beta=1.1" (J is the
    variance ratio of coupling blocks, i.e. sqrt_j**2).
    """
    family, base, cp = parse_operator_spec(spec)
    if family == "gaussian":
        return new_gaussian(params, seed)
    if family == "hadamard":
        return new_hadamard(params, seed)
    return new_coupled(base, params, cp, seed)
