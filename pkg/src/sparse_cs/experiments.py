"""Measurement protocols built on top of the solver.

* recovery_probability: success-rate curve over a density grid, fresh
  matrix and signal per trial, with a 50% crossing estimate
* critical_threshold: per-matrix threshold by incremental densification of
  one signal (nested supports), coarse steps then a fine rewind
* threshold_scaling: fit rho_c(N) = rho_inf - b * N^(-a) by scanning the
  exponent and solving the linear part in closed form
* stability_limit: largest density at which a slightly perturbed planted
  start still converges back, per perturbation size
* timing_benchmark: median recovery wall time vs N with log-log slopes

Trials are independent with RNG substreams keyed by (master seed, indices),
so results do not depend on execution order and optionally run in a process
pool.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from .embp import SolverConfig, recover, recover_perturbed
from .ensembles import EnsembleSpec, generate
from .errors import FitDegenerate, NeverRecovered
from .signals import PriorParams, densify, measure, sample_signal, sample_signal_fixed


@dataclass
class RecoveryCurve:
    rho: np.ndarray
    p_success: np.ndarray
    std_err: np.ndarray
    trials: int
    crossing: float | None


@dataclass
class ThresholdRecord:
    ensemble: EnsembleSpec
    rho_c: float
    trials: int
    seed: int


@dataclass
class ScalingFit:
    rho_inf: float
    b: float
    a: float
    residual: float


@dataclass
class StabilityRecord:
    delta: float
    rho_stab: float


@dataclass
class BenchRow:
    label: str
    n: int
    median_seconds: float
    median_iters: float
    success_rate: float


@dataclass
class BenchResult:
    rows: list
    slopes: dict


def striped_spec(n, seed=0, alpha=0.5, k=20, l_over_n=0.02, j1=4.0, j2=1.0):
    """Striped ensemble at the standard geometry (L = N/50, alpha = 1/2)."""
    return EnsembleSpec(
        "striped",
        n,
        round(n * alpha),
        k=k,
        l=max(1, round(n * l_over_n)),
        j1=j1,
        j2=j2,
        seed=seed,
    )


def _pmap(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=1))


def _substream(*key):
    """Generator plus a derived integer seed, both reproducible from the key."""
    rng = np.random.default_rng(np.random.SeedSequence(key))
    return rng


def _fresh_instance(spec, rho, mean, variance, rng):
    """Matrix and signal for one trial; the matrix seed comes off the trial
    stream so every trial sees an independent matrix."""
    mspec = spec.with_seed(int(rng.integers(2**63)))
    matrix = generate(mspec)
    prior = PriorParams(rho=rho, mean=mean, variance=variance)
    sig = sample_signal(spec.n, prior, rng)
    return matrix, sig


def _curve_trial(args):
    spec, rho, mean, variance, config, seed, i, t = args
    rng = _substream(seed, i, t)
    matrix, sig = _fresh_instance(spec, rho, mean, variance, rng)
    y = measure(matrix, sig)
    res = recover(matrix, y.values, config, truth=sig.values)
    return i, t, bool(res.success)


def _crossing(rho, p):
    """Density where the (decreasing) success curve crosses 1/2, by linear
    interpolation on the first bracketing pair; None if never bracketed."""
    for i in range(len(rho) - 1):
        if p[i] >= 0.5 > p[i + 1]:
            return float(
                rho[i]
                + (p[i] - 0.5) * (rho[i + 1] - rho[i]) / (p[i] - p[i + 1])
            )
    return None


def recovery_probability(
    spec,
    rho_grid,
    trials,
    config=None,
    seed=0,
    mean=0.0,
    variance=1.0,
    workers=1,
):
    """Success probability per density with binomial standard errors; a new
    matrix and signal are drawn for every trial."""
    rho_grid = np.asarray(rho_grid, dtype=np.float64)
    items = [
        (spec, float(rho_grid[i]), mean, variance, config, seed, i, t)
        for i in range(rho_grid.size)
        for t in range(trials)
    ]
    wins = np.zeros(rho_grid.size)
    for i, _, ok in _pmap(_curve_trial, items, workers):
        wins[i] += ok
    p = wins / trials
    err = np.sqrt(p * (1.0 - p) / trials)
    return RecoveryCurve(
        rho=rho_grid,
        p_success=p,
        std_err=err,
        trials=trials,
        crossing=_crossing(rho_grid, p),
    )


def critical_threshold(
    spec,
    config=None,
    seed=0,
    mean=0.0,
    variance=1.0,
    rho_start=None,
    coarse_frac=0.01,
    fine_frac=0.002,
):
    """Per-matrix critical density by incremental densification.

    One fixed matrix; one signal whose support only ever grows. Recover
    after every densification; the density of the last recovered signal
    before the first fine-step failure is rho_c. The starting density is
    0.1*alpha, halved up to twice if even that fails (then NeverRecovered).
    """
    matrix = generate(spec)
    n = spec.n
    prior = PriorParams(rho=min(1.0, max(spec.alpha, 1e-6)), mean=mean, variance=variance)
    if rho_start is None:
        rho_start = 0.1 * spec.alpha
    n_calls = 0
    event = 0

    def attempt(sig):
        nonlocal n_calls
        n_calls += 1
        y = measure(matrix, sig)
        return recover(matrix, y.values, config, truth=sig.values).success

    def rng_next():
        nonlocal event
        event += 1
        return _substream(seed, event)

    sig = None
    rho_try = rho_start
    for _ in range(3):
        cand = sample_signal_fixed(
            n, max(1, round(rho_try * n)), prior, rng_next()
        )
        if attempt(cand):
            sig = cand
            break
        rho_try *= 0.5
    if sig is None:
        raise NeverRecovered(
            f"start densities down to {rho_try * 2:.4g} all failed "
            f"({spec.canonical()})"
        )

    for frac in (coarse_frac, fine_frac):
        step = max(1, round(frac * n))
        while True:
            free = n - sig.support.size
            if free == 0:
                return ThresholdRecord(
                    ensemble=spec, rho_c=1.0, trials=n_calls, seed=seed
                )
            cand = densify(sig, min(step, free), prior, rng_next())
            if attempt(cand):
                sig = cand
            else:
                break

    return ThresholdRecord(
        ensemble=spec, rho_c=sig.density, trials=n_calls, seed=seed
    )


def threshold_scaling(n_values, rho_values, a_grid=None):
    """Least-squares fit of rho_c(N) = rho_inf - b * N^(-a).

    The exponent is scanned over a_grid (default 0.05..0.5 step 0.005); for
    each a the linear pair (rho_inf, b) is solved in closed form and the
    best total squared error wins."""
    n_arr = np.asarray(n_values, dtype=np.float64)
    r_arr = np.asarray(rho_values, dtype=np.float64)
    if n_arr.size != r_arr.size:
        raise FitDegenerate("n and rho lists differ in length")
    if n_arr.size < 3 or np.unique(n_arr).size < 3:
        raise FitDegenerate("need at least 3 distinct sizes")
    if a_grid is None:
        a_grid = np.arange(0.05, 0.5 + 1e-12, 0.005)
    best = None
    for a in a_grid:
        x = n_arr ** (-a)
        xc = x - x.mean()
        vx = float(xc @ xc)
        if vx < 1e-30:
            continue
        slope = float(xc @ (r_arr - r_arr.mean())) / vx
        const = float(r_arr.mean() - slope * x.mean())
        sse = float(np.sum((r_arr - const - slope * x) ** 2))
        if best is None or sse < best[3]:
            best = (float(a), slope, const, sse)
    if best is None:
        raise FitDegenerate("no usable exponent on the grid")
    a, slope, const, sse = best
    return ScalingFit(
        rho_inf=const, b=-slope, a=a, residual=float(np.sqrt(sse / n_arr.size))
    )


def _perturbed_trial(args):
    spec, rho, delta, mean, variance, config, seed, t = args
    rng = _substream(seed, t)
    matrix, sig = _fresh_instance(spec, rho, mean, variance, rng)
    y = measure(matrix, sig)
    res = recover_perturbed(
        matrix,
        y.values,
        sig.values,
        delta,
        config,
        rng_seed=int(rng.integers(2**63)),
        prior=PriorParams(rho=rho, mean=mean, variance=variance),
    )
    return t, bool(res.success)


def perturbed_success_rate(
    spec,
    rho,
    delta,
    trials,
    config=None,
    seed=0,
    mean=0.0,
    variance=1.0,
    workers=1,
):
    """Fraction of trials where the solver falls back to the planted signal
    from a Unif[-delta, delta] perturbed start."""
    items = [
        (spec, rho, delta, mean, variance, config, seed, t)
        for t in range(trials)
    ]
    results = _pmap(_perturbed_trial, items, workers)
    return sum(ok for _, ok in results) / trials


def stability_limit(
    spec,
    delta_grid,
    rho_grid,
    trials,
    config=None,
    seed=0,
    mean=0.0,
    variance=1.0,
    workers=1,
):
    """For each perturbation size: the largest grid density whose perturbed
    starts succeed in at least half the trials (0.0 if none does)."""
    rho_desc = sorted((float(r) for r in rho_grid), reverse=True)
    records = []
    for di, delta in enumerate(delta_grid):
        rho_stab = 0.0
        for rj, rho in enumerate(rho_desc):
            point_seed = int(
                np.random.SeedSequence((seed, di, rj)).generate_state(1)[0]
            )
            rate = perturbed_success_rate(
                spec,
                rho,
                delta,
                trials,
                config=config,
                seed=point_seed,
                mean=mean,
                variance=variance,
                workers=workers,
            )
            if rate >= 0.5:
                rho_stab = rho
                break
        records.append(StabilityRecord(delta=float(delta), rho_stab=rho_stab))
    return records


def timing_benchmark(
    labeled_specs,
    rho,
    trials,
    config=None,
    seed=0,
    mean=0.0,
    variance=1.0,
):
    """Median recover() wall time (matrix generation excluded) per spec,
    plus a log-log slope of time vs N per label. Runs serially so the
    timings are not polluted by contention."""
    rows = []
    for bi, (label, spec) in enumerate(labeled_specs):
        times, iters, succ = [], [], 0
        for t in range(trials):
            rng = _substream(seed, bi, t)
            matrix, sig = _fresh_instance(spec, rho, mean, variance, rng)
            y = measure(matrix, sig)
            res = recover(matrix, y.values, config, truth=sig.values)
            times.append(res.wall_time)
            iters.append(res.n_iters)
            succ += bool(res.success)
            # keep only the scalars: the result's edge messages are O(nnz)
            # and must not stay alive through the next trial's solve
            del res
        rows.append(
            BenchRow(
                label=label,
                n=spec.n,
                median_seconds=float(np.median(times)),
                median_iters=float(np.median(iters)),
                success_rate=succ / trials,
            )
        )
    slopes = {}
    for label in dict.fromkeys(lbl for lbl, _ in labeled_specs):
        pts = [(r.n, r.median_seconds) for r in rows if r.label == label]
        if len(pts) >= 2:
            ns, ts = zip(*pts)
            fit = linregress(np.log(ns), np.log(ts))
            slopes[label] = float(fit.slope)
    return BenchResult(rows=rows, slopes=slopes)
