"""Single command-line entry point.

One binary with subcommands; matrices and vectors pass through text files so
every experiment is a short shell pipeline. All outputs are CSV-or-text,
written atomically, and start with a provenance comment

    # spec=<canonical config string> seed=<seed>

so any file can be reproduced from its own header. The environment variable
SPARSE_CS_SEED overrides --seed when set. With --threads 1 (the default)
repeated runs are byte-identical except for wall-time columns.
"""

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .density_evolution import (
    CoupledProfile,
    de_threshold,
    run_de,
    run_de_coupled,
)
from .embp import SolverConfig, recover
from .ensembles import (
    VARIANTS,
    EnsembleSpec,
    deserialize_matrix,
    generate,
    serialize_matrix,
)
from .errors import ParseError, SparseCSError
from .experiments import (
    critical_threshold,
    recovery_probability,
    stability_limit,
    striped_spec,
    threshold_scaling,
    timing_benchmark,
)
from .signals import (
    PriorParams,
    Signal,
    load_vector,
    measure,
    sample_signal,
    save_vector,
)

_SKIP_IN_CANONICAL = {"out", "trace", "signal_out", "func", "cmd"}


@dataclass
class RunConfig:
    """Parsed invocation: subcommand, flags, effective seed, and the stable
    canonical string used in provenance lines."""

    cmd: str
    args: argparse.Namespace
    seed: int
    canonical: str


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{x:.17g}"
    return str(x)


def _canonical_string(cmd, args):
    parts = [f"cmd={cmd}"]
    for key in sorted(vars(args)):
        if key in _SKIP_IN_CANONICAL or key.startswith("_"):
            continue
        val = getattr(args, key)
        if val is None:
            continue
        parts.append(f"{key.replace('_', '-')}={_fmt(val)}")
    return " ".join(parts)


def _atomic_write(path, writer):
    """Run writer(tmp_path) and rename the result over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".sparse-cs-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _write_csv(path, provenance, header, rows, footer_comments=()):
    lines = [f"# {provenance}", header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    lines.extend(f"# {c}" for c in footer_comments)
    text = "\n".join(lines) + "\n"

    def writer(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)

    _atomic_write(path, writer)


def _float_list(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _int_list(text):
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _grid(lo, hi, step):
    return np.arange(lo, hi + 0.5 * step, step)


def _add_ensemble_args(p, template=False):
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, default=0, help="per-row nonzeros")
    p.add_argument("--l", type=int, default=0, help="number of blocks / seed size")
    p.add_argument("--j1", type=float, default=4.0)
    p.add_argument("--j2", type=float, default=1.0)


def _add_solver_args(p):
    p.add_argument("--damping", type=float, default=0.2)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--conv-tol", type=float, default=1e-10)
    p.add_argument("--recovery-tol", type=float, default=1e-8)
    p.add_argument("--learn-prior", choices=("on", "off"), default="on")


def _add_prior_args(p, with_rho=True):
    if with_rho:
        p.add_argument("--rho", type=float, default=None, help="signal density")
    p.add_argument("--mean", type=float, default=0.0)
    p.add_argument("--variance", type=float, default=1.0)


def _spec_from_args(parser, args, seed):
    if args.m >= args.n:
        parser.error("--m must be smaller than --n (undersampling required)")
    if args.variant in ("homogeneous", "block", "striped") and args.k <= 0:
        parser.error(f"--k is required for variant {args.variant}")
    if args.variant in ("block", "striped") and args.l <= 0:
        parser.error(f"--l is required for variant {args.variant}")
    return EnsembleSpec(
        variant=args.variant,
        n=args.n,
        m=args.m,
        k=args.k,
        l=args.l,
        j1=args.j1,
        j2=args.j2,
        seed=seed,
    )


def _solver_config(args):
    return SolverConfig(
        max_iters=args.max_iters,
        damping=args.damping,
        conv_tol=args.conv_tol,
        recovery_tol=args.recovery_tol,
        learn_prior=args.learn_prior == "on",
        collect_trace=bool(getattr(args, "trace", None)),
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparse-cs",
        description="Sparse-matrix compressed sensing: generation, recovery, "
        "and threshold experiments.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-matrix", help="draw a measurement matrix")
    _add_ensemble_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser(
        "measure",
        help="apply a matrix to a signal (loaded or freshly sampled)",
    )
    p.add_argument("--matrix", required=True)
    p.add_argument("--signal", help="existing signal file; omit to sample one")
    _add_prior_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--signal-out", help="where to store a sampled signal")
    p.add_argument("--out", required=True, help="measurement output file")

    p = sub.add_parser("recover", help="run the solver on matrix + measurement")
    p.add_argument("--matrix", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--truth", help="known signal for mse/success reporting")
    _add_solver_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the estimate as a vector file")
    p.add_argument("--trace", help="write per-iteration CSV trace")

    p = sub.add_parser(
        "sweep-recovery", help="success-probability curve over a density grid"
    )
    _add_ensemble_args(p, template=True)
    _add_solver_args(p)
    _add_prior_args(p, with_rho=False)
    p.add_argument("--rho-min", type=float, required=True)
    p.add_argument("--rho-max", type=float, required=True)
    p.add_argument("--rho-step", type=float, default=0.005)
    p.add_argument("--trials", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser(
        "threshold", help="per-matrix critical density by densification"
    )
    _add_ensemble_args(p)
    _add_solver_args(p)
    _add_prior_args(p, with_rho=False)
    p.add_argument("--rho-start", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser(
        "scaling-fit", help="fit rho_c(N) = rho_inf - b N^-a to a CSV"
    )
    p.add_argument("--data", required=True, help="CSV with columns n,rho_c")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser(
        "stability", help="perturbed-start stability limit per delta"
    )
    _add_ensemble_args(p, template=True)
    _add_solver_args(p)
    _add_prior_args(p, with_rho=False)
    p.add_argument("--deltas", default="1e-4,1e-3,1e-2,1e-1")
    p.add_argument("--rho-min", type=float, default=0.1)
    p.add_argument("--rho-max", type=float, default=0.49)
    p.add_argument("--rho-step", type=float, default=0.01)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("de", help="population-dynamics run at one density")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--rho0", type=float, required=True)
    _add_prior_args(p, with_rho=False)
    p.add_argument("--pop-size", type=int, default=10_000)
    p.add_argument("--sweeps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser(
        "de-threshold", help="bisected population-dynamics threshold"
    )
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    _add_prior_args(p, with_rho=False)
    p.add_argument("--pop-size", type=int, default=50_000)
    p.add_argument("--rho-min", type=float, default=0.2)
    p.add_argument("--rho-max", type=float, default=0.4)
    p.add_argument("--rho-step", type=float, default=0.01)
    p.add_argument("--max-sweeps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser(
        "de-coupled", help="block-coupled population dynamics"
    )
    p.add_argument("--l", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--j1", type=float, default=4.0)
    p.add_argument("--j2", type=float, default=1.0)
    p.add_argument("--rho0", type=float, required=True)
    _add_prior_args(p, with_rho=False)
    p.add_argument(
        "--profile", help="file with one alpha_p per line (overrides --l/--alpha)"
    )
    p.add_argument("--pop-size", type=int, default=2000)
    p.add_argument("--sweeps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="recovery-time scaling benchmark")
    p.add_argument("--striped-sizes", default="")
    p.add_argument("--dense-sizes", default="")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--rho0", type=float, default=0.2)
    _add_prior_args(p, with_rho=False)
    _add_solver_args(p)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    seed = getattr(args, "seed", 0)
    env = os.environ.get("SPARSE_CS_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            parser.error(f"SPARSE_CS_SEED={env!r} is not an integer")
        args.seed = seed
    args._parser = parser
    return RunConfig(
        cmd=args.cmd,
        args=args,
        seed=seed,
        canonical=_canonical_string(args.cmd, args),
    )


def _cmd_gen_matrix(cfg):
    args = cfg.args
    spec = _spec_from_args(args._parser, args, cfg.seed)
    matrix = generate(spec)
    prov = f"spec={cfg.canonical} seed={cfg.seed}"
    _atomic_write(
        args.out, lambda p: serialize_matrix(matrix, p, header_comment=prov)
    )
    print(
        f"wrote {args.out}: {matrix.n_rows}x{matrix.n_cols}, "
        f"{matrix.nnz} nonzeros"
    )
    return 0


def _cmd_measure(cfg):
    args = cfg.args
    matrix = deserialize_matrix(args.matrix)
    prov = f"spec={cfg.canonical} seed={cfg.seed}"
    if args.signal:
        sig = Signal(load_vector(args.signal))
    else:
        if args.rho is None:
            args._parser.error("--rho is required when sampling a signal")
        prior = PriorParams(rho=args.rho, mean=args.mean, variance=args.variance)
        sig = sample_signal(matrix.n_cols, prior, cfg.seed)
        if args.signal_out:
            _atomic_write(
                args.signal_out,
                lambda p: save_vector(p, sig.values, header_comment=prov),
            )
    y = measure(matrix, sig)
    _atomic_write(
        args.out, lambda p: save_vector(p, y.values, header_comment=prov)
    )
    print(f"wrote {args.out}: {y.m} measurements, signal density {sig.density:.4f}")
    return 0


def _cmd_recover(cfg):
    args = cfg.args
    matrix = deserialize_matrix(args.matrix)
    y = load_vector(args.y)
    truth = load_vector(args.truth) if args.truth else None
    config = _solver_config(args)
    res = recover(matrix, y, config, truth=truth)
    prov = f"spec={cfg.canonical} seed={cfg.seed}"
    if args.out:
        _atomic_write(
            args.out, lambda p: save_vector(p, res.estimate, header_comment=prov)
        )
    if args.trace:
        _write_csv(
            args.trace,
            prov,
            "iter,mse,rho,xbar,sigma2,max_da",
            res.trace or [],
        )
    print(
        f"converged={int(res.converged)} iters={res.n_iters} mse={res.mse:.3e} "
        f"perfect={int(res.success)} rho={res.prior.rho:.6g} "
        f"xbar={res.prior.mean:.6g} sigma2={res.prior.variance:.6g} "
        f"time={res.wall_time:.3f}s"
    )
    if truth is not None:
        return 0 if res.success else 1
    return 0 if res.converged else 1


def _cmd_sweep_recovery(cfg):
    args = cfg.args
    spec = _spec_from_args(args._parser, args, 0)
    grid = _grid(args.rho_min, args.rho_max, args.rho_step)
    curve = recovery_probability(
        spec,
        grid,
        args.trials,
        config=_solver_config(args),
        seed=cfg.seed,
        mean=args.mean,
        variance=args.variance,
        workers=args.threads,
    )
    rows = [
        (
            float(curve.rho[i]),
            int(round(curve.p_success[i] * curve.trials)),
            curve.trials,
            float(curve.p_success[i]),
            float(curve.std_err[i]),
        )
        for i in range(curve.rho.size)
    ]
    footer = []
    if curve.crossing is not None:
        footer.append(f"crossing={curve.crossing:.17g}")
    _write_csv(
        cfg.args.out,
        f"spec={cfg.canonical} seed={cfg.seed}",
        "rho,successes,trials,p_success,std_err",
        rows,
        footer,
    )
    cross_txt = "none" if curve.crossing is None else f"{curve.crossing:.4f}"
    print(f"wrote {args.out}: {len(rows)} densities, 50% crossing {cross_txt}")
    return 0


def _cmd_threshold(cfg):
    args = cfg.args
    spec = _spec_from_args(args._parser, args, cfg.seed)
    rec = critical_threshold(
        spec,
        config=_solver_config(args),
        seed=cfg.seed,
        mean=args.mean,
        variance=args.variance,
        rho_start=args.rho_start,
    )
    _write_csv(
        args.out,
        f"spec={cfg.canonical} seed={cfg.seed}",
        "variant,n,m,k,l,rho_c,recover_calls,seed",
        [
            (
                spec.variant,
                spec.n,
                spec.m,
                spec.k,
                spec.l,
                rec.rho_c,
                rec.trials,
                rec.seed,
            )
        ],
    )
    print(f"wrote {args.out}: rho_c={rec.rho_c:.5f} ({rec.trials} solves)")
    return 0


def _cmd_scaling_fit(cfg):
    args = cfg.args
    ns, rhos = [], []
    with open(args.data) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            if len(fields) < 2:
                raise ParseError("expected 'n,rho_c'", line=lineno)
            try:
                ns.append(float(fields[0]))
                rhos.append(float(fields[1]))
            except ValueError:
                if lineno == 1 or not ns:
                    continue  # header row
                raise ParseError(f"bad row {line!r}", line=lineno) from None
    fit = threshold_scaling(ns, rhos)
    _write_csv(
        args.out,
        f"spec={cfg.canonical} seed={cfg.seed}",
        "rho_inf,b,a,residual",
        [(fit.rho_inf, fit.b, fit.a, fit.residual)],
    )
    print(
        f"wrote {args.out}: rho_inf={fit.rho_inf:.5f} b={fit.b:.4f} "
        f"a={fit.a:.3f} residual={fit.residual:.3e}"
    )
    return 0


def _cmd_stability(cfg):
    args = cfg.args
    spec = _spec_from_args(args._parser, args, 0)
    records = stability_limit(
        spec,
        _float_list(args.deltas),
        _grid(args.rho_min, args.rho_max, args.rho_step),
        args.trials,
        config=_solver_config(args),
        seed=cfg.seed,
        mean=args.mean,
        variance=args.variance,
        workers=args.threads,
    )
    _write_csv(
        args.out,
        f"spec={cfg.canonical} seed={cfg.seed}",
        "delta,rho_stab",
        [(r.delta, r.rho_stab) for r in records],
    )
    print(f"wrote {args.out}: {len(records)} deltas")
    return 0


def _cmd_de(cfg):
    args = cfg.args
    prior = PriorParams(rho=args.rho0, mean=args.mean, variance=args.variance)
    res = run_de(
        args.alpha,
        args.k,
        prior,
        pop_size=args.pop_size,
        max_sweeps=args.sweeps,
        seed=cfg.seed,
    )
    _write_csv(
        args.out,
        f"spec={cfg.canonical} seed={cfg.seed}",
        "iter,d",
        list(enumerate(res.trajectory.tolist(), start=1)),
        [f"converged={int(res.converged_to_zero)}"],
    )
    print(
        f"wrote {args.out}: {res.iters} sweeps, final D={res.trajectory[-1]:.3e}, "
        f"converged={int(res.converged_to_zero)}"
    )
    return 0


def _cmd_de_threshold(cfg):
    args = cfg.args
    thr = de_threshold(
        args.alpha,
        args.k,
        args.pop_size,
        _grid(args.rho_min, args.rho_max, args.rho_step),
        mean=args.mean,
        variance=args.variance,
        seed=cfg.seed,
        max_sweeps=args.max_sweeps,
    )
    _write_csv(
        args.out,
        f"spec={cfg.canonical} seed={cfg.seed}",
        "threshold",
        [(thr,)],
    )
    print(f"wrote {args.out}: threshold={thr:.4f}")
    return 0


def _load_profile(path, k, j1, j2):
    alphas = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                alphas.append(float(line))
            except ValueError:
                raise ParseError(f"bad alpha {line!r}", line=lineno) from None
    if not alphas:
        raise ParseError("profile file has no alpha values")
    return CoupledProfile(
        l=len(alphas), k=k, j1=j1, j2=j2, alphas=tuple(alphas)
    )


def _cmd_de_coupled(cfg):
    args = cfg.args
    if args.profile:
        profile = _load_profile(args.profile, args.k, args.j1, args.j2)
    else:
        if args.l is None or args.alpha is None:
            args._parser.error("--l and --alpha are required without --profile")
        profile = CoupledProfile.seeded(
            args.l, args.alpha, args.k, args.j1, args.j2
        )
    prior = PriorParams(rho=args.rho0, mean=args.mean, variance=args.variance)
    res = run_de_coupled(
        profile,
        prior,
        pop_size=args.pop_size,
        max_sweeps=args.sweeps,
        seed=cfg.seed,
    )
    rows = [
        (t + 1, p + 1, float(res.block_trajectory[t, p]))
        for t in range(res.iters)
        for p in range(profile.l)
    ]
    _write_csv(
        args.out,
        f"spec={cfg.canonical} seed={cfg.seed}",
        "iter,block,d",
        rows,
        [f"converged={int(res.converged_to_zero)}"],
    )
    print(
        f"wrote {args.out}: {res.iters} sweeps over {profile.l} blocks, "
        f"converged={int(res.converged_to_zero)}"
    )
    return 0


def _cmd_bench(cfg):
    args = cfg.args
    labeled = []
    for n in _int_list(args.striped_sizes):
        labeled.append(
            ("striped", striped_spec(n, alpha=args.alpha, k=args.k))
        )
    for n in _int_list(args.dense_sizes):
        labeled.append(
            ("dense", EnsembleSpec("dense", n, round(n * args.alpha)))
        )
    if not labeled:
        args._parser.error("need --striped-sizes and/or --dense-sizes")
    res = timing_benchmark(
        labeled,
        args.rho0,
        args.trials,
        config=_solver_config(args),
        seed=cfg.seed,
        mean=args.mean,
        variance=args.variance,
    )
    rows = [
        (r.label, r.n, r.median_iters, r.success_rate, r.median_seconds)
        for r in res.rows
    ]
    footer = [
        f"slope_{label}={res.slopes[label]:.17g}" for label in sorted(res.slopes)
    ]
    _write_csv(
        args.out,
        f"spec={cfg.canonical} seed={cfg.seed}",
        "label,n,median_iters,success_rate,median_seconds",
        rows,
        footer,
    )
    slope_txt = " ".join(
        f"{lbl}={res.slopes[lbl]:.3f}" for lbl in sorted(res.slopes)
    )
    print(f"wrote {args.out}: slopes {slope_txt}")
    return 0


_HANDLERS = {
    "gen-matrix": _cmd_gen_matrix,
    "measure": _cmd_measure,
    "recover": _cmd_recover,
    "sweep-recovery": _cmd_sweep_recovery,
    "threshold": _cmd_threshold,
    "scaling-fit": _cmd_scaling_fit,
    "stability": _cmd_stability,
    "de": _cmd_de,
    "de-threshold": _cmd_de_threshold,
    "de-coupled": _cmd_de_coupled,
    "bench": _cmd_bench,
}


def run(cfg):
    """Dispatch a parsed invocation; returns the process exit code."""
    try:
        return _HANDLERS[cfg.cmd](cfg)
    except SparseCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 1


def main(argv=None):
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
