"""Edge-message recovery solver with learned signal prior.

Gaussian messages per edge (mean a, variance v) are updated by alternating
a measurement-side sweep (cavity precision U and field V) with a signal-side
sweep (posterior moments under a Bernoulli-Gaussian prior). The prior
parameters (rho, mean, variance) can be re-estimated after every sweep by a
maximum-likelihood ascent step, so the solver needs no knowledge of the
signal statistics.

All per-edge work is vectorized over the edge arrays of the matrix; per-row
and per-column sums go through bincount and the cavity quantities are
recovered by subtracting the edge's own contribution from the full sum.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, InvalidPrior
from .signals import PriorParams

# estimates past this magnitude mean the iteration is amplifying noise,
# not recovering a signal; bail out while everything is still finite
_DIVERGE_LIMIT = 1e15


@dataclass
class SolverConfig:
    """Knobs for the message-passing loop.

    min_iters forces a fixed number of sweeps before the convergence test
    is consulted (used by fixed-budget experiments).
    """

    max_iters: int = 2000
    min_iters: int = 0
    damping: float = 0.2
    em_damping: float = 0.0
    conv_tol: float = 1e-10
    recovery_tol: float = 1e-8
    learn_prior: bool = True
    init_prior: PriorParams | None = None
    denom_floor: float = 1e-12
    rho_floor: float = 1e-6
    var_floor: float = 1e-12
    collect_trace: bool = False


@dataclass
class MessageState:
    """Per-edge means and variances plus the current prior."""

    a: np.ndarray
    v: np.ndarray
    prior: PriorParams


@dataclass
class RecoveryResult:
    estimate: np.ndarray
    n_iters: int
    converged: bool
    mse: float | None
    success: bool | None
    prior: PriorParams
    wall_time: float
    messages: "MessageState"
    trace: list | None = None


def _logit(rho):
    with np.errstate(divide="ignore"):
        return np.log(rho) - np.log1p(-rho)


def _posterior_terms(u, v, prior):
    """Mixture weight z, mean m and variance inv_p of the Gaussian component
    of the scalar posterior prior(x) * exp(-u x^2 / 2 + v x).

    Written so that the prior variance appears only in products, never in a
    denominator on its own; this keeps everything finite for variance -> 0,
    u -> huge, and rho in {0, 1}.
    """
    s = prior.variance
    xb = prior.mean
    den = np.maximum(1.0 + s * u, 1e-300)
    m = (s * v + xb) / den
    inv_p = s / den
    t = (
        _logit(prior.rho)
        - 0.5 * np.log(den)
        + (s * v * v + (2.0 * v - u * xb) * xb) / (2.0 * den)
    )
    z = expit(t)
    return z, m, inv_p


def fa_fc(u, v, prior):
    """Posterior mean f_a and variance f_c of x under the measure
    prior(x) * exp(-u x^2 / 2 + v x), elementwise in (u, v) with u >= 0."""
    if prior.variance <= 0.0 and prior.rho > 0.0:
        raise InvalidPrior(
            f"variance={prior.variance} requires rho=0, got rho={prior.rho}"
        )
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z, m, inv_p = _posterior_terms(u, v, prior)
    f_a = z * m
    # z/P + z(1-z)m^2 rather than z(1/P + m^2) - (zm)^2: avoids cancellation
    f_c = z * inv_p + z * (1.0 - z) * m * m
    return f_a, f_c


def measurement_update(matrix, y, a_edge, v_edge, denom_floor=1e-12):
    """Cavity precision A and field B per edge.

    A = F^2 / D and B = F (y - r) / D where D and r sum F^2 v and F a over
    the edge's row excluding the edge itself. D is floored to keep A, B
    finite when all cavity variances vanish.
    """
    f = matrix.val
    f2 = matrix.val_sq
    row = matrix.row
    s1 = np.bincount(row, weights=f * a_edge, minlength=matrix.n_rows)
    s2 = np.bincount(row, weights=f2 * v_edge, minlength=matrix.n_rows)
    den = s2[row] - f2 * v_edge
    np.maximum(den, denom_floor, out=den)
    a_mat = f2 / den
    b_mat = f * (y[row] - (s1[row] - f * a_edge)) / den
    return a_mat, b_mat


def signal_update(matrix, a_mat, b_mat, prior):
    """New edge means/variances from the cavity posteriors, plus the full
    per-node sums (U, V) needed for node estimates and prior learning.

    The cavity precision is clamped at zero; a negative value can only come
    from roundoff in the full-sum-minus-own-term subtraction.
    """
    col = matrix.col
    u_sum = np.bincount(col, weights=a_mat, minlength=matrix.n_cols)
    v_sum = np.bincount(col, weights=b_mat, minlength=matrix.n_cols)
    u_cav = np.maximum(u_sum[col] - a_mat, 0.0)
    v_cav = v_sum[col] - b_mat
    a_new, v_new = fa_fc(u_cav, v_cav, prior)
    return a_new, v_new, u_sum, v_sum


def em_update(u_sum, v_sum, a_node, v_node, prior, config):
    """One ascent step on the prior parameters.

    mean <- sum(a_i) / (rho N)
    variance <- sum(v_i + a_i^2) / (rho N) - mean^2
    rho <- (1 - rho) sum(z_i) / sum(1 - z_i)

    with the mixture weights z_i taken under the pre-update prior. The rho
    rule has fixed point rho = sum(z)/N; rho and variance are clamped away
    from degenerate values.
    """
    z, _, _ = _posterior_terms(u_sum, v_sum, prior)
    n = a_node.size
    rho_n = max(prior.rho * n, config.denom_floor)
    mean_new = float(np.sum(a_node) / rho_n)
    var_new = float(np.sum(v_node + a_node * a_node) / rho_n - mean_new**2)
    sz = float(np.sum(z))
    rho_new = (1.0 - prior.rho) * sz / max(n - sz, config.denom_floor)
    rho_new = min(max(rho_new, config.rho_floor), 1.0)
    var_new = max(var_new, config.var_floor)
    return PriorParams(rho=rho_new, mean=mean_new, variance=var_new)


# edges per slice of the blocked sweep: small enough that every per-edge
# temporary stays cache-resident, so one sweep streams each big edge array
# from memory a fixed number of times regardless of matrix size
_BLOCK = 65536


class _Workspace:
    """Per-run scratch for the blocked sweep: seven block buffers for the
    elementwise temporaries plus full-length a_mat / b_mat, which have to
    survive the row-sum and column-sum barriers inside one sweep."""

    def __init__(self, nnz):
        self.blk = min(_BLOCK, nnz)
        self.w = tuple(np.empty(self.blk) for _ in range(7))
        self.a_mat = np.empty(nnz)
        self.b_mat = np.empty(nnz)


def _sweep(matrix, y, a_edge, v_edge, prior, config, ws):
    """One damped sweep, floating-point identical to composing
    measurement_update and signal_update with the damping rule, but
    allocation-free: every expression tree is replayed on cache-sized
    slices and the damped messages are written back while still hot.

    Updates a_edge / v_edge in place; returns the per-node sums (U, V).
    """
    f = matrix.val
    f2 = matrix.val_sq
    row = matrix.row
    col = matrix.col
    nnz = matrix.nnz
    lam = config.damping
    c_new = 1.0 - lam
    s = prior.variance
    xb = prior.mean
    logit = _logit(prior.rho)

    # full-array row sums keep bincount's edge order, hence its rounding
    np.multiply(f, a_edge, out=ws.a_mat)
    s1 = np.bincount(row, weights=ws.a_mat, minlength=matrix.n_rows)
    np.multiply(f2, v_edge, out=ws.a_mat)
    s2 = np.bincount(row, weights=ws.a_mat, minlength=matrix.n_rows)

    for start in range(0, nnz, ws.blk):
        sl = slice(start, min(start + ws.blk, nnz))
        bs = sl.stop - start
        w1, w2, w3 = (w[:bs] for w in ws.w[:3])
        np.take(s2, row[sl], out=w1)
        np.multiply(f2[sl], v_edge[sl], out=w2)
        np.subtract(w1, w2, out=w1)
        np.maximum(w1, config.denom_floor, out=w1)    # cavity denominator
        np.divide(f2[sl], w1, out=ws.a_mat[sl])
        np.multiply(f[sl], a_edge[sl], out=w2)
        np.take(s1, row[sl], out=w3)
        np.subtract(w3, w2, out=w3)
        np.take(y, row[sl], out=w2)
        np.subtract(w2, w3, out=w2)                   # y - cavity mean
        np.multiply(f[sl], w2, out=w2)
        np.divide(w2, w1, out=ws.b_mat[sl])

    u_sum = np.bincount(col, weights=ws.a_mat, minlength=matrix.n_cols)
    v_sum = np.bincount(col, weights=ws.b_mat, minlength=matrix.n_cols)

    for start in range(0, nnz, ws.blk):
        sl = slice(start, min(start + ws.blk, nnz))
        bs = sl.stop - start
        u, v, w3, w4, w5, w6, w7 = (w[:bs] for w in ws.w)
        np.take(u_sum, col[sl], out=u)
        np.subtract(u, ws.a_mat[sl], out=u)
        np.maximum(u, 0.0, out=u)                     # cavity precision
        np.take(v_sum, col[sl], out=v)
        np.subtract(v, ws.b_mat[sl], out=v)           # cavity field
        # posterior moments, same expression tree as _posterior_terms
        np.multiply(u, s, out=w3)
        np.add(w3, 1.0, out=w3)
        np.maximum(w3, 1e-300, out=w3)                # den
        np.multiply(v, s, out=w5)
        np.multiply(w5, v, out=w6)
        if xb != 0.0:
            np.multiply(v, 2.0, out=w7)
            np.multiply(u, xb, out=w4)
            np.subtract(w7, w4, out=w7)
            np.multiply(w7, xb, out=w7)
            np.add(w6, w7, out=w6)                    # + (2v - u xb) xb
        np.divide(w6, w3, out=w6)
        np.multiply(w6, 0.5, out=w6)                  # num / (2 den)
        np.log(w3, out=w4)
        np.multiply(w4, 0.5, out=w4)
        np.subtract(logit, w4, out=w4)
        np.add(w4, w6, out=w4)
        expit(w4, out=w4)                             # mixture weight z
        if xb != 0.0:
            np.add(w5, xb, out=w5)
        np.divide(w5, w3, out=w5)                     # gaussian mean m
        np.divide(s, w3, out=w3)                      # s / den
        np.subtract(1.0, w4, out=w6)
        np.multiply(w4, w6, out=w6)
        np.multiply(w6, w5, out=w6)
        np.multiply(w6, w5, out=w6)                   # z (1-z) m^2
        np.multiply(w4, w3, out=w3)
        np.add(w3, w6, out=w3)                        # f_c
        np.multiply(w4, w5, out=w4)                   # f_a
        if lam > 0.0:
            np.multiply(a_edge[sl], lam, out=a_edge[sl])
            np.multiply(w4, c_new, out=w4)
            np.add(a_edge[sl], w4, out=a_edge[sl])
            np.multiply(v_edge[sl], lam, out=v_edge[sl])
            np.multiply(w3, c_new, out=w3)
            np.add(v_edge[sl], w3, out=v_edge[sl])
        else:
            a_edge[sl] = w4
            v_edge[sl] = w3
    return u_sum, v_sum


def _run(matrix, y, a_edge, v_edge, prior, config, truth, t0):
    ws = _Workspace(matrix.nnz)
    a_node = np.zeros(matrix.n_cols)
    node_v = np.zeros(matrix.n_cols)
    converged = False
    n_iters = 0
    trace = [] if config.collect_trace else None
    for n_iters in range(1, config.max_iters + 1):
        u_sum, v_sum = _sweep(matrix, y, a_edge, v_edge, prior, config, ws)
        node_a, node_v = fa_fc(u_sum, v_sum, prior)
        delta = float(np.max(np.abs(node_a - a_node)))
        a_node = node_a
        # runaway message amplification (possible on failing runs with mixed
        # J magnitudes): stop while every value is still finite
        diverged = not np.isfinite(delta) or np.max(np.abs(node_a)) > _DIVERGE_LIMIT
        if config.learn_prior and not diverged:
            new_prior = em_update(u_sum, v_sum, node_a, node_v, prior, config)
            mu = config.em_damping
            if mu > 0.0:
                new_prior = PriorParams(
                    rho=mu * prior.rho + (1.0 - mu) * new_prior.rho,
                    mean=mu * prior.mean + (1.0 - mu) * new_prior.mean,
                    variance=mu * prior.variance
                    + (1.0 - mu) * new_prior.variance,
                )
            prior = new_prior
        if trace is not None:
            it_mse = (
                float(np.mean((a_node - truth) ** 2))
                if truth is not None
                else float("nan")
            )
            trace.append(
                (n_iters, it_mse, prior.rho, prior.mean, prior.variance, delta)
            )
        if diverged:
            break
        if n_iters >= config.min_iters and delta < config.conv_tol:
            converged = True
            break
    if truth is not None:
        mse = float(np.mean((a_node - truth) ** 2))
        success = bool(mse < config.recovery_tol)
    else:
        # no ground truth: report distance as -1 and call the run perfect
        # when the posterior variances have collapsed
        mse = -1.0
        success = bool(np.mean(node_v) < config.recovery_tol)
    return RecoveryResult(
        estimate=a_node,
        n_iters=n_iters,
        converged=converged,
        mse=mse,
        success=success,
        prior=prior,
        wall_time=time.perf_counter() - t0,
        messages=MessageState(a=a_edge, v=v_edge, prior=prior),
        trace=trace,
    )


def _check_measurement(matrix, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (matrix.n_rows,):
        raise DimensionMismatch(
            f"measurement length {y.shape} does not match {matrix.n_rows} rows"
        )
    return y


def _check_truth(matrix, truth):
    if truth is None:
        return None
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != (matrix.n_cols,):
        raise DimensionMismatch(
            f"truth length {truth.shape} does not match {matrix.n_cols} columns"
        )
    return truth


def recover(matrix, y, config=None, truth=None):
    """Run the solver from the agnostic start.

    Initial prior (unless overridden by config.init_prior): rho = alpha/2,
    mean 0, variance sum(y^2) / (rho sum(F^2)). Messages start at the prior
    moments: a = rho*mean, v = rho*(mean^2 + variance).

    truth is optional and only used to report mse and success.
    """
    t0 = time.perf_counter()
    if config is None:
        config = SolverConfig()
    y = _check_measurement(matrix, y)
    truth = _check_truth(matrix, truth)
    if config.init_prior is not None:
        prior = config.init_prior
    else:
        rho0 = 0.5 * matrix.n_rows / matrix.n_cols
        var0 = float(np.sum(y * y)) / (rho0 * float(np.sum(matrix.val_sq)))
        prior = PriorParams(
            rho=rho0, mean=0.0, variance=max(var0, config.var_floor)
        )
    a_edge = np.full(matrix.nnz, prior.rho * prior.mean)
    v_edge = np.full(
        matrix.nnz, prior.rho * (prior.mean**2 + prior.variance)
    )
    return _run(matrix, y, a_edge, v_edge, prior, config, truth, t0)


def empirical_prior(truth, rho_floor=1e-6, var_floor=1e-12):
    """Bernoulli-Gaussian parameters read off a concrete signal."""
    truth = np.asarray(truth, dtype=np.float64)
    support = truth != 0.0
    k = int(support.sum())
    n = truth.size
    if k == 0:
        return PriorParams(rho=rho_floor, mean=0.0, variance=1.0)
    vals = truth[support]
    return PriorParams(
        rho=max(k / n, rho_floor),
        mean=float(vals.mean()),
        variance=max(float(vals.var()), var_floor),
    )


def recover_perturbed(matrix, y, truth, delta, config=None, rng_seed=0, prior=None):
    """Run the solver from the planted signal perturbed by iid Unif[-delta,
    delta] noise per edge, with edge variances delta^2/3. delta = 0 starts
    exactly at the solution.

    Prior learning starts from `prior` (the signal's generating parameters)
    when given, else from config.init_prior, else from the empirical
    parameters of the planted signal.
    """
    t0 = time.perf_counter()
    if config is None:
        config = SolverConfig()
    y = _check_measurement(matrix, y)
    truth = _check_truth(matrix, truth)
    if prior is None:
        prior = config.init_prior
    if prior is None:
        prior = empirical_prior(truth, config.rho_floor, config.var_floor)
    a_edge = truth[matrix.col]
    if delta > 0.0:
        rng = np.random.default_rng(rng_seed)
        a_edge = a_edge + rng.uniform(-delta, delta, size=matrix.nnz)
    else:
        a_edge = a_edge.copy()
    v_edge = np.full(matrix.nnz, delta * delta / 3.0)
    return _run(matrix, y, a_edge, v_edge, prior, config, truth, t0)
