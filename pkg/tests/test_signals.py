"""Signal sampling, linear measurement, densification, and vector file IO."""

import numpy as np
import pytest

from sparse_cs import (
    DimensionMismatch,
    EnsembleSpec,
    InvalidPrior,
    ParseError,
    PriorParams,
    SupportFull,
    densify,
    generate,
    load_vector,
    measure,
    sample_signal,
    sample_signal_fixed,
    save_vector,
)
from sparse_cs.ensembles import SparseMatrix


def test_prior_validation():
    with pytest.raises(InvalidPrior):
        PriorParams(rho=-0.1)
    with pytest.raises(InvalidPrior):
        PriorParams(rho=1.2)
    with pytest.raises(InvalidPrior):
        PriorParams(rho=0.5, variance=-1.0)


def test_prior_defaults():
    p = PriorParams(rho=0.3)
    assert p.mean == 0.0 and p.variance == 1.0


def test_sample_zero_density_is_all_zero():
    s = sample_signal(500, PriorParams(rho=0.0), rng_seed=7)
    assert np.all(s.values == 0.0)
    assert s.support.size == 0
    assert s.density == 0.0


def test_sample_full_density_moments():
    # rho = 1: empirical mean within 3 sigma / sqrt(N), variance within 5%
    s = sample_signal(100_000, PriorParams(rho=1.0), rng_seed=11)
    assert abs(s.values.mean()) < 0.03
    assert abs(s.values.var() - 1.0) < 0.05


def test_sample_support_concentration():
    s = sample_signal(10_000, PriorParams(rho=0.3), rng_seed=3)
    assert abs(s.support.size - 3000) <= 150


def test_sample_nonzero_mean_prior():
    s = sample_signal(100_000, PriorParams(rho=0.5, mean=2.0, variance=0.25),
                      rng_seed=5)
    nz = s.values[s.support]
    assert abs(nz.mean() - 2.0) < 0.01
    assert abs(nz.var() - 0.25) < 0.01


def test_sample_deterministic():
    a = sample_signal(1000, PriorParams(rho=0.2), rng_seed=42)
    b = sample_signal(1000, PriorParams(rho=0.2), rng_seed=42)
    assert np.array_equal(a.values, b.values)
    c = sample_signal(1000, PriorParams(rho=0.2), rng_seed=43)
    assert not np.array_equal(a.values, c.values)


def test_sample_fixed_exact_count():
    s = sample_signal_fixed(400, 37, PriorParams(rho=0.1), rng_seed=1)
    assert s.support.size == 37
    z = sample_signal_fixed(400, 0, PriorParams(rho=0.1), rng_seed=1)
    assert z.support.size == 0


def test_sample_fixed_overfull():
    with pytest.raises(SupportFull):
        sample_signal_fixed(10, 11, PriorParams(rho=0.5), rng_seed=0)


def test_measure_hand_example():
    # single row (1, -1) against s = (3, 2) gives y = (1)
    mat = SparseMatrix(1, 2, [0, 0], [0, 1], [1.0, -1.0])
    from sparse_cs.signals import Signal

    y = measure(mat, Signal([3.0, 2.0]))
    assert y.values.shape == (1,)
    assert y.values[0] == pytest.approx(1.0)


def test_measure_matches_dense_product():
    spec = EnsembleSpec("homogeneous", n=200, m=100, k=10, seed=4)
    mat = generate(spec)
    s = sample_signal(200, PriorParams(rho=0.3), rng_seed=9)
    y = measure(mat, s)
    dense = mat.to_dense() @ s.values
    np.testing.assert_allclose(y.values, dense, rtol=0, atol=1e-12)


def test_measure_linearity():
    spec = EnsembleSpec("homogeneous", n=200, m=100, k=10, seed=4)
    mat = generate(spec)
    from sparse_cs.signals import Signal

    rng = np.random.default_rng(0)
    s1 = Signal(rng.normal(size=200))
    s2 = Signal(rng.normal(size=200))
    lhs = measure(mat, Signal(2.5 * s1.values - 0.75 * s2.values)).values
    rhs = 2.5 * measure(mat, s1).values - 0.75 * measure(mat, s2).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


def test_measure_dimension_mismatch():
    spec = EnsembleSpec("homogeneous", n=200, m=100, k=10, seed=4)
    mat = generate(spec)
    with pytest.raises(DimensionMismatch):
        measure(mat, sample_signal(199, PriorParams(rho=0.3), rng_seed=0))


def test_densify_identity():
    s = sample_signal(300, PriorParams(rho=0.2), rng_seed=2)
    rng = np.random.default_rng(0)
    t = densify(s, 0, PriorParams(rho=0.2), rng)
    assert t is not s
    assert np.array_equal(t.values, s.values)


def test_densify_saturates_from_empty():
    from sparse_cs.signals import Signal

    s = Signal(np.zeros(50))
    t = densify(s, 50, PriorParams(rho=0.5), np.random.default_rng(1))
    assert t.support.size == 50


def test_densify_preserves_old_support():
    s = sample_signal_fixed(1000, 100, PriorParams(rho=0.1), rng_seed=8)
    t = densify(s, 5, PriorParams(rho=0.1), np.random.default_rng(3))
    assert t.support.size == 105
    assert set(s.support.tolist()) <= set(t.support.tolist())
    np.testing.assert_array_equal(t.values[s.support], s.values[s.support])


def test_densify_support_full():
    from sparse_cs.signals import Signal

    s = Signal(np.ones(10))
    with pytest.raises(SupportFull):
        densify(s, 1, PriorParams(rho=0.5), np.random.default_rng(0))


def test_densify_nested_sequence():
    """Successive densify steps extend, never rewrite, earlier steps."""
    prior = PriorParams(rho=0.1)
    s0 = sample_signal_fixed(500, 20, prior, rng_seed=6)
    rng = np.random.default_rng(77)
    s1 = densify(s0, 10, prior, rng)
    s2 = densify(s1, 10, prior, rng)
    assert s2.support.size == 40
    np.testing.assert_array_equal(s2.values[s1.support], s1.values[s1.support])


def test_vector_round_trip(tmp_path):
    vals = np.random.default_rng(5).normal(size=64)
    p = tmp_path / "v.txt"
    save_vector(p, vals, header_comment="unit test")
    back = load_vector(p)
    np.testing.assert_array_equal(back, vals)
    assert open(p).readline().startswith("# ")


def test_load_vector_bad_value(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("2\n1.5\nbogus\n")
    with pytest.raises(ParseError) as err:
        load_vector(p)
    assert "3" in str(err.value)


def test_load_vector_bad_header(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("not-a-count\n1.0\n")
    with pytest.raises(ParseError):
        load_vector(p)


def test_load_vector_count_mismatch(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("3\n1.0\n2.0\n")
    with pytest.raises(DimensionMismatch):
        load_vector(p)


def test_load_vector_empty(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("# only a comment\n")
    with pytest.raises(ParseError):
        load_vector(p)
