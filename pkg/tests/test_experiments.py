"""Tests for the experiment drivers: recovery curves, per-matrix critical
densities, the finite-size scaling fit, perturbation stability scans and the
timing benchmark."""

import numpy as np
import pytest

from sparse_cs.embp import SolverConfig
from sparse_cs.ensembles import EnsembleSpec
from sparse_cs.errors import FitDegenerate, NeverRecovered
from sparse_cs.experiments import (
    _crossing,
    critical_threshold,
    recovery_probability,
    stability_limit,
    striped_spec,
    threshold_scaling,
    timing_benchmark,
)

HOMOG1000 = EnsembleSpec("homogeneous", 1000, 500, k=20, seed=0)
HOMOG5000 = EnsembleSpec("homogeneous", 5000, 2500, k=20, seed=0)
SMALL = EnsembleSpec("homogeneous", 500, 250, k=10, seed=0)


def test_striped_spec_standard_geometry():
    spec = striped_spec(5000)
    assert spec.variant == "striped"
    assert spec.n == 5000
    assert spec.m == 2500
    assert spec.k == 20
    assert spec.l == 100
    assert spec.j1 == 4.0
    assert spec.j2 == 1.0


def test_crossing_linear_interpolation():
    rho = [0.1, 0.2, 0.3, 0.4]
    p = [1.0, 0.8, 0.4, 0.0]
    # bracket is (0.8, 0.4): 0.2 + 0.3/0.4 * 0.1
    assert _crossing(rho, p) == pytest.approx(0.275)


def test_crossing_exact_half_and_no_bracket():
    assert _crossing([0.1, 0.2], [0.5, 0.4]) == pytest.approx(0.1)
    assert _crossing([0.1, 0.2], [0.9, 0.6]) is None
    assert _crossing([0.1, 0.2], [0.4, 0.3]) is None


def test_recovery_curve_deep_success():
    # far below threshold every trial must recover
    curve = recovery_probability(HOMOG5000, [0.01], 20, seed=42)
    assert curve.p_success[0] == 1.0
    assert curve.std_err[0] == 0.0
    assert curve.trials == 20
    assert curve.crossing is None


def test_recovery_curve_deterministic_and_worker_invariant():
    a = recovery_probability(SMALL, [0.1, 0.2], 4, seed=9, workers=1)
    b = recovery_probability(SMALL, [0.1, 0.2], 4, seed=9, workers=1)
    c = recovery_probability(SMALL, [0.1, 0.2], 4, seed=9, workers=2)
    assert np.array_equal(a.p_success, b.p_success)
    assert np.array_equal(a.p_success, c.p_success)
    assert np.array_equal(a.std_err, c.std_err)


def test_critical_threshold_striped():
    spec = striped_spec(2000, seed=5)
    rec = critical_threshold(spec, seed=9)
    assert 0.25 <= rec.rho_c <= 0.40
    assert rec.trials >= 10
    assert rec.ensemble == spec
    assert rec.seed == 9


def test_critical_threshold_full_size_step():
    # step = N jumps straight to full support, which fails in both phases,
    # so the record is just the starting density round(0.05 N)/N
    rec = critical_threshold(
        HOMOG1000,
        config=SolverConfig(max_iters=300),
        seed=3,
        coarse_frac=1.0,
        fine_frac=1.0,
    )
    assert rec.rho_c == pytest.approx(0.05)
    assert rec.trials == 3


def test_critical_threshold_never_recovered():
    # alpha = 1/4 and starts 0.9, 0.45, 0.225 are all far above threshold
    spec = EnsembleSpec("homogeneous", 1000, 250, k=20, seed=0)
    with pytest.raises(NeverRecovered):
        critical_threshold(
            spec,
            config=SolverConfig(max_iters=200),
            seed=1,
            rho_start=0.9,
        )


def test_scaling_fit_recovers_planted_law():
    ns = [2000, 5000, 10000, 20000]
    rhos = [0.5 - n ** (-0.18) for n in ns]
    fit = threshold_scaling(ns, rhos)
    assert fit.rho_inf == pytest.approx(0.5, abs=1e-9)
    assert fit.b == pytest.approx(1.0, abs=1e-9)
    assert fit.a == pytest.approx(0.18, abs=1e-9)
    assert fit.residual < 1e-12


def test_scaling_fit_degenerate_inputs():
    with pytest.raises(FitDegenerate):
        threshold_scaling([1000, 1000, 1000], [0.3, 0.3, 0.3])
    with pytest.raises(FitDegenerate):
        threshold_scaling([1000, 2000], [0.3, 0.31])
    with pytest.raises(FitDegenerate):
        threshold_scaling([1000, 2000, 4000], [0.3, 0.31])


@pytest.fixture(scope="module")
def stability_records():
    return stability_limit(
        HOMOG1000,
        [0.0, 1e-4, 1e-2, 1e-1],
        [0.25, 0.35, 0.45],
        4,
        config=SolverConfig(max_iters=400),
        seed=7,
    )


def test_stability_zero_delta_tops_grid(stability_records):
    # a zero perturbation starts exactly at the planted fixed point
    assert stability_records[0].delta == 0.0
    assert stability_records[0].rho_stab == pytest.approx(0.45)


def test_stability_non_increasing_in_delta(stability_records):
    deltas = [r.delta for r in stability_records]
    assert deltas == sorted(deltas)
    stabs = [r.rho_stab for r in stability_records]
    assert all(s1 >= s2 for s1, s2 in zip(stabs, stabs[1:]))
    assert stabs[-1] >= 0.25


def test_timing_benchmark_smoke():
    bench = timing_benchmark(
        [
            ("striped", striped_spec(2450)),
            ("striped", striped_spec(4900)),
            ("dense", EnsembleSpec("dense", 500, 250)),
            ("dense", EnsembleSpec("dense", 1000, 500)),
        ],
        0.15,
        3,
        seed=5,
    )
    assert [r.label for r in bench.rows] == [
        "striped",
        "striped",
        "dense",
        "dense",
    ]
    assert [r.n for r in bench.rows] == [2450, 4900, 500, 1000]
    for row in bench.rows:
        assert row.success_rate == 1.0
        assert row.median_seconds > 0.0
        assert row.median_iters > 0.0
    assert set(bench.slopes) == {"striped", "dense"}
    assert all(np.isfinite(v) for v in bench.slopes.values())
    # a dense solve is quadratic per sweep, a striped one linear
    assert bench.slopes["dense"] > bench.slopes["striped"]
