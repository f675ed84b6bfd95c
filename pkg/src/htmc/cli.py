"""Command-line interface.

Exit codes: 0 success, 2 parameter error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .chains import DISCRETE, GRAPH_KINDS, MODES, MixtureModel, graph_chain, pseudoinverse, random_chain, random_mixture, to_laplacian
from .errors import GenerationError, IrreducibilityError, NumericFailure, NumericWarning, ParameterError
from .gradients import fd_gradient, grad_hitting_loss
from .hitting import censor_missing, estimate_hitting_times, hitting_times
from .learn import LearnConfig, learn_single, wsbt_init
from .metrics import frobenius_error, mixture_recovery_error, recovery_error
from .mixture import MixtureConfig, ultra_mc
from .simulate import sample_mixture_trails

EXIT_OK, EXIT_PARAM, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2**32))
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _as_mixture(model) -> MixtureModel:
    if isinstance(model, MixtureModel):
        return model
    return MixtureModel((model,), np.full((1, model.n), 1.0 / model.n))


def _learn_config(args, mode) -> LearnConfig:
    data = io.read_json(args.config) if args.config else {}
    if isinstance(data.get("inner"), dict):
        data = data["inner"]
    data["mode"] = mode
    for flag in ("iterations", "lr", "project_every", "loss_tol", "init"):
        value = getattr(args, flag, None)
        if value is not None:
            data[flag] = value
    data.setdefault("seed", args.seed)
    return LearnConfig.from_dict(data)


def cmd_generate(args) -> int:
    rng = np.random.default_rng(_seed(args))
    if args.kind == "random":
        model = random_chain(args.mode, args.n, rng) if args.C is None else random_mixture(args.mode, args.C, args.n, rng)
    else:
        if args.mode != DISCRETE:
            raise ParameterError("graph walks are discrete-time; use --mode discrete")
        model = graph_chain(args.kind, args.n)
    io.write_model(args.out, model)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _as_mixture(io.read_model(args.model))
    size = args.length if model.mode == DISCRETE else args.horizon
    if size is None:
        raise ParameterError("--length is required for discrete models, --horizon for continuous ones")
    trails = sample_mixture_trails(model, args.count, size, np.random.default_rng(_seed(args)))
    io.write_trails(args.out, trails)
    return EXIT_OK


def cmd_estimate_ht(args) -> int:
    trails = io.read_trails(args.trails)
    n = args.n
    if n is None:
        if not trails:
            raise ParameterError("--n is required when the trail file is empty")
        n = int(max(t.states.max() for t in trails)) + 1
    est = estimate_hitting_times(trails, n)
    if args.fill is not None:
        est = censor_missing(est, args.fill)
    io.write_estimate(args.out, est)
    return EXIT_OK


def _read_target(args):
    if args.estimate:
        est = io.read_estimate(args.estimate)
        return est.H_hat, est.mask
    H = io.read_matrix_csv(args.H)
    return H, np.ones(H.shape, dtype=bool)


def cmd_learn(args) -> int:
    _seed(args)
    H, mask = _read_target(args)
    config = _learn_config(args, args.mode)
    truth = io.read_chain(args.truth) if args.truth else None
    if args.wsbt_only:
        chain = wsbt_init(H, mask, config.mode)
        report = None
    else:
        report = learn_single(H, mask, config)
        chain = report.chain
        if report.iterations_run < config.iterations and not np.isfinite(report.best_loss):
            raise NumericFailure("; ".join(report.warnings) or "non-finite loss")
    io.write_chain(args.out, chain)
    if args.report and report is not None:
        io.write_json(args.report, report.to_dict())
    if truth is not None:
        print(f"recovery_error: {recovery_error(chain, truth)!r}")
    return EXIT_OK


def cmd_learn_mixture(args) -> int:
    trails = io.read_trails(args.trails)
    if not trails:
        raise ParameterError("the trail file is empty")
    data = io.read_json(args.config) if args.config else {}
    inner = dict(data.pop("inner", {}) or {})
    if args.inner_iterations is not None:
        inner["iterations"] = args.inner_iterations
    inner.setdefault("iterations", 2000)
    data["inner"] = inner
    if args.em_iterations is not None:
        data["em_iterations"] = args.em_iterations
    if args.tol is not None:
        data["convergence_tol"] = args.tol
    data["seed"] = _seed(args)
    config = MixtureConfig.from_dict(data)
    truth = _as_mixture(io.read_model(args.truth)) if args.truth else None
    result = ultra_mc(trails, args.C, config, n=args.n, truth=truth)
    io.write_mixture(args.out, result.mixture)
    if args.history:
        io.write_json(args.history, result.history_dict())
    if truth is not None:
        print(f"recovery_error: {mixture_recovery_error(result.mixture, truth).recovery_error!r}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    learned = _as_mixture(io.read_model(args.learned))
    truth = _as_mixture(io.read_model(args.truth))
    report = mixture_recovery_error(learned, truth)
    if args.estimate:
        est = io.read_estimate(args.estimate)
        report.frobenius_ht_error = frobenius_error(est.H_hat, hitting_times(truth.chains[0]), est.mask)
    io.write_json(args.out, report.to_dict())
    if args.history and args.curves:
        _write_curves(args.curves, io.read_json(args.history))
    print(f"recovery_error: {report.recovery_error!r}")
    return EXIT_OK


def _write_curves(path, history: dict):
    rows = []
    for entry in history.get("rounds", []):
        losses = [x for x in entry.get("losses", []) if x is not None]
        rows.append([
            int(entry["round"]),
            float(np.mean(losses)) if losses else float("nan"),
            float(entry.get("entropy", float("nan"))),
            float(entry.get("max_change", float("nan"))),
            float(entry["recovery_error"]) if entry.get("recovery_error") is not None else float("nan"),
        ])
    header = "round,mean_loss,entropy,max_change,recovery_error\n"
    body = "".join(",".join(repr(x) for x in row) + "\n" for row in rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + body)


def bench_gradients(n_list, iters: int, mode: str, seed: int):
    """Rows ``(n, analytical_s, numerical_s, ratio)``; times are per gradient."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in n_list:
        if n < 2:
            raise ParameterError(f"benchmark sizes must be >= 2, got {n}")
        chain = random_chain(mode, n, rng)
        target = hitting_times(random_chain(mode, n, rng))
        Lp = pseudoinverse(to_laplacian(chain))
        t0 = time.perf_counter()
        for _ in range(iters):
            grad_hitting_loss(Lp, target)
        analytical = (time.perf_counter() - t0) / iters
        t0 = time.perf_counter()
        fd_gradient(Lp, target)
        numerical = time.perf_counter() - t0
        rows.append((n, analytical, numerical, numerical / analytical))
    return rows


def cmd_bench_gradients(args) -> int:
    rows = bench_gradients(args.n, args.iters, args.mode, _seed(args))
    text = "n,analytical_s,numerical_s,ratio\n" + "".join(f"{n},{a!r},{b!r},{r!r}\n" for n, a, b, r in rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _threads_default():
    value = os.environ.get("HTMC_THREADS")
    return int(value) if value else None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed; drawn and printed when omitted")
    common.add_argument("--threads", type=int, default=_threads_default(), help="worker cap (default: $HTMC_THREADS)")
    common.add_argument("--mode", choices=MODES, default=DISCRETE)

    parser = argparse.ArgumentParser(prog="htmc", description="Markov chain reconstruction from hitting times.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a chain or mixture JSON")
    p.add_argument("--kind", choices=GRAPH_KINDS + ("random",), default="random")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--C", type=int, default=None, help="mixture size; omit for a single chain")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", parents=[common], help="sample trails as JSONL")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-ht", parents=[common], help="estimate hitting times from trails")
    p.add_argument("--trails", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--fill", type=float, default=None, help="replace unobserved entries by this value")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate_ht)

    p = sub.add_parser("learn", parents=[common], help="learn one chain from hitting times")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--estimate", help="estimate JSON")
    src.add_argument("--H", help="complete hitting-time matrix as CSV")
    p.add_argument("--config", default=None, help="LearnConfig JSON")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--project-every", dest="project_every", type=int, default=None)
    p.add_argument("--loss-tol", dest="loss_tol", type=float, default=None)
    p.add_argument("--init", choices=("random", "wsbt"), default=None)
    p.add_argument("--wsbt-only", action="store_true", help="write the linear-system initializer and stop")
    p.add_argument("--truth", default=None, help="chain JSON; prints the recovery error")
    p.add_argument("--report", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("learn-mixture", parents=[common], help="fit a mixture to trails by EM")
    p.add_argument("--trails", required=True)
    p.add_argument("--C", type=int, required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--config", default=None, help="MixtureConfig JSON")
    p.add_argument("--em-iterations", dest="em_iterations", type=int, default=None)
    p.add_argument("--inner-iterations", dest="inner_iterations", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--history", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn_mixture)

    p = sub.add_parser("evaluate", parents=[common], help="compare a learned model with the truth")
    p.add_argument("--learned", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", default=None, help="estimate JSON scored against the truth's hitting times")
    p.add_argument("--history", default=None)
    p.add_argument("--curves", default=None, help="CSV of per-round history values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-gradients", parents=[common], help="time analytical vs finite-difference gradients")
    p.add_argument("--n", type=int, nargs="+", default=[5, 10, 20, 50])
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_gradients)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        with threadpool_limits(limits=args.threads), warnings.catch_warnings():
            warnings.simplefilter("always", NumericWarning)
            return args.func(args)
    except io.FormatError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, GenerationError, IrreducibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
