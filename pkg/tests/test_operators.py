import math

import numpy as np
import pytest
import scipy.linalg

from sscodes.message import CodeParams, random_message, to_dense
from sscodes.operators import (
    CoupledOperator,
    CouplingParams,
    GaussianOperator,
    HadamardOperator,
    fwht,
    new_coupled,
    parse_operator,
    parse_operator_spec,
)


def test_fwht_matches_dense_transform():
    rng = np.random.default_rng(0)
    for n in (1, 2, 4, 8, 16, 64):
        v = rng.standard_normal(n)
        h = scipy.linalg.hadamard(n).astype(float)
        assert np.allclose(fwht(v.copy()), h @ v, atol=1e-10)


def test_fwht_rejects_non_power_of_two():
    with pytest.raises(AssertionError):
        fwht(np.zeros(6))


# ---------------------------------------------------------------- gaussian


def test_gaussian_matches_dense():
    params = CodeParams(L=8, B=4, M=20)
    op = GaussianOperator(params, seed=3)
    d = op.materialize()
    assert d.shape == (20, 32)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(params.N)
    u = rng.standard_normal(params.M)
    assert np.allclose(op.forward(v), d @ v, atol=1e-12)
    assert np.allclose(op.adjoint(u), d.T @ u, atol=1e-12)
    # exact entrywise squares, not a surrogate
    assert np.allclose(op.forward_sq(v), (d * d) @ v, atol=1e-12)
    assert np.allclose(op.adjoint_sq(u), (d * d).T @ u, atol=1e-12)


def test_gaussian_forward_sq_known_matrix():
    # forward_sq must square entries: [[1,2],[3,4]] on [1,1] gives [5, 25]
    params = CodeParams(L=1, B=2, M=2)
    op = GaussianOperator(params, seed=0)
    op._a = np.array([[1.0, 2.0], [3.0, 4.0]])
    op._a_sq = op._a * op._a
    assert np.allclose(op.forward_sq(np.array([1.0, 1.0])), [5.0, 25.0])


def test_gaussian_power_constraint_monte_carlo():
    params = CodeParams(L=2**9, B=4, M=256)
    op = GaussianOperator(params, seed=11)
    acc = 0.0
    for k in range(100):
        x = to_dense(random_message(params, np.random.default_rng(1000 + k)))
        z = op.forward(x)
        acc += (z @ z) / params.M
    assert 0.98 <= acc / 100 <= 1.02


def test_gaussian_deterministic_and_adjoint_identity():
    params = CodeParams(L=4, B=4, M=10)
    a = GaussianOperator(params, seed=7).materialize()
    b = GaussianOperator(params, seed=7).materialize()
    assert np.array_equal(a, b)
    op = GaussianOperator(params, seed=8)
    rng = np.random.default_rng(2)
    u = rng.standard_normal(params.M)
    v = rng.standard_normal(params.N)
    assert np.dot(u, op.forward(v)) == pytest.approx(np.dot(op.adjoint(u), v), abs=1e-10)


def test_gaussian_float32_storage_upcasts():
    params = CodeParams(L=16, B=4, M=32)
    op = GaussianOperator(params, seed=5, dtype=np.float32)
    assert op._a.dtype == np.float32
    v = np.random.default_rng(0).standard_normal(params.N)
    out = op.forward(v)
    assert out.dtype == np.float64
    assert np.allclose(out, op.materialize() @ v, rtol=1e-5, atol=1e-5)


def test_gaussian_forward_sq_concentrates_to_scalar_rule():
    # with entry variance 1/L the squared map applied to a uniform vector
    # concentrates on sum(v)/L per component; per-row fluctuation is
    # sqrt(2/N) relative, so N = 2^14 keeps the worst of 64 rows under 5%
    params = CodeParams(L=2**9, B=32, M=64)
    op = GaussianOperator(params, seed=21)
    tau = np.full(params.N, 0.17)
    approx = np.full(params.M, tau.sum() / params.L)
    rel = np.abs(op.forward_sq(tau) - approx) / approx
    assert rel.max() < 0.05


def test_operator_rejects_bad_shapes():
    params = CodeParams(L=4, B=4, M=10)
    op = GaussianOperator(params, seed=0)
    with pytest.raises(ValueError):
        op.forward(np.zeros(params.N + 1))
    with pytest.raises(ValueError):
        op.adjoint(np.zeros(params.M - 1))


# ---------------------------------------------------------------- hadamard


def test_hadamard_matches_dense_small():
    params = CodeParams(L=2, B=4, M=4)  # N = 8
    op = HadamardOperator(params, seed=13)
    d = op.materialize()
    v = np.random.default_rng(3).standard_normal(params.N)
    assert np.max(np.abs(op.forward(v) - d @ v)) < 1e-12


def test_hadamard_matches_dense_exhaustive_sizes():
    rng_seeds = [0, 1, 2]
    for n_sections, b in ((2, 2), (3, 4), (8, 8), (5, 8)):
        params = CodeParams(L=n_sections, B=b, M=min(2 * n_sections, _nh(n_sections * b) - 1))
        for seed in rng_seeds:
            op = HadamardOperator(params, seed=seed)
            assert op.n_h <= 64
            d = op.materialize()
            v = np.random.default_rng(seed + 50).standard_normal(params.N)
            u = np.random.default_rng(seed + 99).standard_normal(params.M)
            assert np.allclose(op.forward(v), d @ v, atol=1e-12)
            assert np.allclose(op.adjoint(u), d.T @ u, atol=1e-12)


def _nh(n):
    p = 1
    while p < n:
        p *= 2
    return p


def test_hadamard_adjoint_identity():
    params = CodeParams(L=8, B=8, M=40)
    op = HadamardOperator(params, seed=4)
    rng = np.random.default_rng(5)
    u = rng.standard_normal(params.M)
    v = rng.standard_normal(params.N)
    assert np.dot(u, op.forward(v)) == pytest.approx(np.dot(op.adjoint(u), v), abs=1e-10)


def test_hadamard_squared_maps_are_scalar_rules():
    params = CodeParams(L=8, B=8, M=40)
    op = HadamardOperator(params, seed=4)
    v = np.random.default_rng(6).random(params.N)
    u = np.random.default_rng(7).random(params.M)
    c2 = op.entry_std**2
    assert np.allclose(op.forward_sq(v), c2 * v.sum())
    assert np.allclose(op.adjoint_sq(u), c2 * u.sum())
    d = op.materialize()
    assert np.allclose((d * d) @ v, op.forward_sq(v), atol=1e-12)


def test_hadamard_excludes_constant_row_and_caps_m():
    params = CodeParams(L=4, B=4, M=15)  # N = n_h = 16, so at most 15 rows
    op = HadamardOperator(params, seed=9)
    assert op.rows.min() >= 1
    assert len(set(op.rows.tolist())) == params.M
    with pytest.raises(ValueError):
        HadamardOperator(CodeParams(L=4, B=4, M=16), seed=0)


def test_hadamard_power_constraint_monte_carlo():
    params = CodeParams(L=2**9, B=4, M=256)
    op = HadamardOperator(params, seed=17)
    acc = 0.0
    for k in range(100):
        x = to_dense(random_message(params, np.random.default_rng(2000 + k)))
        z = op.forward(x)
        acc += (z @ z) / params.M
    assert 0.98 <= acc / 100 <= 1.02


def test_hadamard_deterministic():
    params = CodeParams(L=4, B=4, M=8)
    assert np.array_equal(
        HadamardOperator(params, seed=3).materialize(),
        HadamardOperator(params, seed=3).materialize(),
    )


# ----------------------------------------------------------------- coupled


def test_coupled_band_structure():
    cp = CouplingParams(l_c=8, w_b=2, w_f=1, sqrt_j=0.3, beta_seed=1.2)
    assert cp.l_r == 9
    params = CodeParams(L=16, B=4, M=180)
    op = CoupledOperator("gaussian", params, cp, seed=0)
    d = op.materialize()
    col_w = params.N // cp.l_c
    for r in range(cp.l_r):
        r0, r1 = op.row_offsets[r], op.row_offsets[r + 1]
        for c in range(cp.l_c):
            block = d[r0:r1, c * col_w : (c + 1) * col_w]
            if c < r - 2 or c > r + 1:
                assert np.all(block == 0.0)
            else:
                assert np.any(block != 0.0)


def test_coupled_seed_row_taller():
    cp = CouplingParams(l_c=8, w_b=2, w_f=1, sqrt_j=0.3, beta_seed=1.2)
    params = CodeParams(L=16, B=4, M=180)
    op = CoupledOperator("gaussian", params, cp, seed=0)
    assert sum(op.row_heights) == params.M
    assert op.row_heights[0] > op.row_heights[1]
    assert len(set(op.row_heights[1:])) == 1


def test_coupled_column_variance_identity():
    # every column's summed entry variance must equal M/L exactly
    cp = CouplingParams(l_c=16, w_b=3, w_f=1, sqrt_j=0.3, beta_seed=1.1)
    params = CodeParams(L=32, B=64, M=384)
    op = CoupledOperator("gaussian", params, cp, seed=1)
    weighted = np.array(op.row_heights, dtype=float) @ op.block_var
    assert np.allclose(weighted, params.M / params.L, rtol=1e-12)


def test_coupled_power_constraint_monte_carlo():
    cp = CouplingParams(l_c=16, w_b=3, w_f=1, sqrt_j=0.3, beta_seed=1.1)
    params = CodeParams(L=32, B=64, M=384)
    op = CoupledOperator("gaussian", params, cp, seed=1)
    acc = 0.0
    n = 60
    for k in range(n):
        x = to_dense(random_message(params, np.random.default_rng(3000 + k)))
        z = op.forward(x)
        acc += (z @ z) / params.M
    assert 0.98 <= acc / n <= 1.02


def test_coupled_hadamard_power_constraint():
    cp = CouplingParams(l_c=16, w_b=3, w_f=1, sqrt_j=0.3, beta_seed=1.1)
    params = CodeParams(L=32, B=64, M=384)
    op = CoupledOperator("hadamard", params, cp, seed=1)
    acc = 0.0
    n = 60
    for k in range(n):
        x = to_dense(random_message(params, np.random.default_rng(4000 + k)))
        z = op.forward(x)
        acc += (z @ z) / params.M
    assert 0.98 <= acc / n <= 1.02


def test_coupled_matches_dense():
    cp = CouplingParams(l_c=4, w_b=2, w_f=1, sqrt_j=0.5, beta_seed=1.25)
    params = CodeParams(L=8, B=8, M=28)
    for base in ("gaussian", "hadamard"):
        op = CoupledOperator(base, params, cp, seed=2)
        d = op.materialize()
        rng = np.random.default_rng(8)
        v = rng.standard_normal(params.N)
        u = rng.standard_normal(params.M)
        assert np.allclose(op.forward(v), d @ v, atol=1e-10)
        assert np.allclose(op.adjoint(u), d.T @ u, atol=1e-10)


def test_coupled_squared_surrogate_tracks_exact_squares():
    cp = CouplingParams(l_c=4, w_b=2, w_f=1, sqrt_j=0.5, beta_seed=1.0)
    params = CodeParams(L=64, B=8, M=400)
    op = CoupledOperator("hadamard", params, cp, seed=3)
    d = op.materialize()
    v = np.full(params.N, 0.31)
    exact = (d * d) @ v
    surrogate = op.forward_sq(v)
    # hadamard blocks have constant entry magnitude: the surrogate is exact
    assert np.allclose(surrogate, exact, rtol=1e-10)
    u = np.full(params.M, 0.17)
    assert np.allclose(op.adjoint_sq(u), (d * d).T @ u, rtol=1e-10)


def test_coupled_gaussian_surrogate_concentrates():
    cp = CouplingParams(l_c=4, w_b=2, w_f=1, sqrt_j=0.5, beta_seed=1.0)
    params = CodeParams(L=256, B=4, M=1200)
    op = CoupledOperator("gaussian", params, cp, seed=4)
    d = op.materialize()
    v = np.full(params.N, 1.0)
    exact = (d * d) @ v
    surrogate = op.forward_sq(v)
    rel = np.abs(surrogate - exact) / surrogate
    # per-row chi-square fluctuation around the variance rule: small on
    # average, bounded in the extreme tail across all 1200 rows
    assert rel.mean() < 0.08
    assert rel.max() < 0.5


def test_coupled_degenerate_chain_is_uncoupled():
    # one block-column with full-strength coupling: uniform entry variance 1/L
    cp = CouplingParams(l_c=1, w_b=1, w_f=1, sqrt_j=1.0, beta_seed=1.0)
    params = CodeParams(L=8, B=4, M=40)
    op = CoupledOperator("gaussian", params, cp, seed=5)
    assert np.allclose(op.block_var, 1.0 / params.L)
    d = op.materialize()
    assert d.shape == (params.M, params.N)
    assert np.all(np.any(d != 0.0, axis=1))


def test_coupled_validation_errors():
    with pytest.raises(ValueError):
        CouplingParams(l_c=4, w_b=5, w_f=1, sqrt_j=0.3)  # window wider than chain
    with pytest.raises(ValueError):
        CouplingParams(l_c=4, w_b=0, w_f=1, sqrt_j=0.3)
    with pytest.raises(ValueError):
        CouplingParams(l_c=4, w_b=1, w_f=1, sqrt_j=1.5)
    with pytest.raises(ValueError):
        CouplingParams(l_c=4, w_b=1, w_f=1, sqrt_j=0.3, beta_seed=0.5)
    cp = CouplingParams(l_c=3, w_b=1, w_f=1, sqrt_j=0.3)
    with pytest.raises(ValueError):
        CoupledOperator("gaussian", CodeParams(L=8, B=4, M=40), cp, seed=0)  # L % l_c != 0
    with pytest.raises(ValueError):
        CoupledOperator("dft", CodeParams(L=9, B=4, M=40), cp, seed=0)


def test_coupled_deterministic():
    cp = CouplingParams(l_c=4, w_b=2, w_f=1, sqrt_j=0.5, beta_seed=1.1)
    params = CodeParams(L=8, B=4, M=60)
    a = CoupledOperator("gaussian", params, cp, seed=6).materialize()
    b = CoupledOperator("gaussian", params, cp, seed=6).materialize()
    assert np.array_equal(a, b)


# ------------------------------------------------------------------- parse


def test_parse_operator_families():
    params = CodeParams(L=16, B=8, M=20)
    assert isinstance(parse_operator("gaussian", params, 0), GaussianOperator)
    assert isinstance(parse_operator("hadamard", params, 0), HadamardOperator)
    op = parse_operator("coupled:hadamard,Lc=4,wb=2,wf=1,J=0.09,seed_beta=1.1", params, 0)
    assert isinstance(op, CoupledOperator)
    assert op.cp.l_c == 4
    assert op.cp.sqrt_j == pytest.approx(0.3)
    assert op.cp.beta_seed == pytest.approx(1.1)


def test_parse_operator_spec_validation():
    assert parse_operator_spec("gaussian") == ("gaussian", None, None)
    family, base, cp = parse_operator_spec("coupled:gaussian,Lc=2,wb=1,wf=1")
    assert (family, base, cp.l_c) == ("coupled", "gaussian", 2)
    with pytest.raises(ValueError):
        parse_operator_spec("toeplitz")
    with pytest.raises(ValueError):
        parse_operator_spec("coupled:Lc=4")
    with pytest.raises(ValueError):
        parse_operator_spec("coupled:gaussian,window=3")
    with pytest.raises(ValueError):
        parse_operator_spec("coupled:dft,Lc=4")


def test_new_coupled_seed_sequence_accepted():
    cp = CouplingParams(l_c=2, w_b=1, w_f=1, sqrt_j=0.5)
    params = CodeParams(L=4, B=4, M=24)
    op = new_coupled("gaussian", params, cp, np.random.SeedSequence(42))
    assert op.dims == (24, 16)
