"""Command-line interface: simulate, cv, predict, bootstrap, demo, bench.

Every subcommand is deterministic given ``--seed``; output files carry a
comment header with the artifact version, seed and resolved configuration.
Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

A ``--config FILE`` of ``key = value`` lines supplies defaults; explicit
flags take precedence over the file, which takes precedence over built-in
defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .dataset import CurveDataset
from .datafiles import read_dataset, write_dataset, write_table
from .exceptions import DataFormatError, NumericalError, RegularizationRequiredError
from .metrics import mspe, sens_spec
from .model import FittedModel, bootstrap_intervals, fit_model
from .selection import cv_large_p, cv_small_p
from .simulate import ScenarioInstance, SimScenario, brownian_demo, fig1_curves
from .solvers import PenaltyConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_SIGMA_CELLS = (0.01, 0.1, 1.0)
_M_CELLS = (1, 5, 10)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    args = parser.parse_args(_apply_config(argv, parser))
    try:
        return args.func(args)
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RegularizationRequiredError, NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _apply_config(argv, parser):
    """Splice config-file entries ahead of the explicit flags."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        parser.error("--config requires a file path")
    extra = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataFormatError(f"{path}: malformed line {line!r}")
                key, val = (part.strip() for part in line.split("=", 1))
                extra.extend([f"--{key.replace('_', '-')}", val.strip("\"'")])
    except OSError as exc:
        parser.error(str(exc))
    rest = argv[:idx] + argv[idx + 2 :]
    # config entries first so explicit flags override them
    return [rest[0], *extra, *rest[1:]] if rest else extra


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvfreg",
        description="Multivariate-response scalar-on-function regression toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset directory")
    sim.add_argument("--sim", type=int, required=True, choices=(1, 2, 3, 4))
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--m", type=int, default=1)
    sim.add_argument("--sigma", type=float, default=0.1)
    sim.add_argument("--rho", type=float, default=0.2)
    sim.add_argument("--lag", type=int, default=2)
    sim.add_argument("--n-times", type=int, default=64)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--sample-seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    cv = sub.add_parser("cv", help="cross-validated tuning plus a final fit")
    cv.add_argument("--data", required=True)
    cv.add_argument("--mode", choices=("smooth", "sparse"), default="smooth")
    cv.add_argument("--basis-dim", type=int, default=30)
    cv.add_argument("--degree", type=int, default=3)
    cv.add_argument("--folds", type=int, default=5)
    cv.add_argument("--seed", type=int, default=0)
    cv.add_argument("--model-out", required=True)
    cv.add_argument("--cv-out", required=True)
    cv.set_defaults(func=cmd_cv_fit)

    pred = sub.add_parser("predict", help="predict responses for new curves")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", required=True)
    pred.set_defaults(func=cmd_predict)

    boot = sub.add_parser("bootstrap", help="bootstrap prediction intervals")
    boot.add_argument("--data", required=True, help="training dataset directory")
    boot.add_argument("--model", required=True)
    boot.add_argument("--new", required=True, help="dataset directory with new curves")
    boot.add_argument("--reps", type=int, default=1000)
    boot.add_argument("--level", type=float, default=0.95)
    boot.add_argument("--seed", type=int, default=0)
    boot.add_argument("--k-rule", choices=("fixed", "k_upper", "cv"), default="fixed")
    boot.add_argument("--out", required=True)
    boot.set_defaults(func=cmd_bootstrap)

    demo = sub.add_parser("demo", help="population-level demonstrations")
    demo.add_argument("--figure", type=int, required=True, choices=(1, 2))
    demo.add_argument("--case", choices=("ar", "cs"), default="cs")
    demo.add_argument("--rho", type=float, default=0.5)
    demo.add_argument("--m", type=int, default=20)
    demo.add_argument("--out", required=True)
    demo.set_defaults(func=cmd_demo)

    bench = sub.add_parser("bench", help="replicate a simulation cell end to end")
    bench.add_argument("--sim", type=int, required=True, choices=(1, 2, 3, 4))
    bench.add_argument("--m", type=int, default=1)
    bench.add_argument("--sigma", type=float, default=0.1)
    bench.add_argument("--rho", type=float, default=0.2)
    bench.add_argument("--lag", type=int, default=2)
    bench.add_argument("--reps", type=int, default=20)
    bench.add_argument("--train-n", type=int, default=100)
    bench.add_argument("--test-n", type=int, default=500)
    bench.add_argument("--basis-dim", type=int, default=30)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--methods", default=None, help="comma list: smooth,sparse")
    bench.add_argument("--threads", type=int, default=0, help="0 = available parallelism")
    bench.add_argument("--full", action="store_true",
                       help="paper-scale grid: 100 reps, all sigma x m cells")
    bench.add_argument("--out", required=True)
    bench.set_defaults(func=cmd_bench)
    return parser


# ---------------------------------------------------------------------------


def _scenario(args, m=None, sigma=None) -> SimScenario:
    return SimScenario(
        sim_id=args.sim,
        m=args.m if m is None else m,
        sigma=args.sigma if sigma is None else sigma,
        rho=args.rho,
        lag=args.lag,
        n_times=getattr(args, "n_times", 64),
        seed=args.seed,
    )


def cmd_simulate(args) -> int:
    inst = ScenarioInstance(_scenario(args))
    ds = inst.sample(args.n, sample_seed=args.sample_seed)
    paths = write_dataset(ds, args.out, meta={"command": "simulate", "n": args.n})
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_cv_fit(args) -> int:
    from .basis import make_basis

    ds = read_dataset(args.data)
    spec = make_basis(args.basis_dim, args.degree)
    if args.mode == "smooth":
        cv = cv_small_p(ds, spec, args.seed, n_folds=args.folds)
        mode = "smooth"
    else:
        cv = cv_large_p(ds, spec, args.seed, n_folds=args.folds)
        mode = "smooth-sparse"
    tau, lam, eta, k = cv.best
    config = PenaltyConfig(mode=mode, tau=tau, lam=lam, eta=eta)
    model = fit_model(ds, spec, config, k=None)
    if k < model.k:
        model = fit_model(ds, spec, config, k=k, components=model.components)
    model.save(args.model_out)
    with open(args.cv_out, "w") as fh:
        json.dump(cv.to_dict(), fh)
    print(f"best tau={tau} lam={lam} eta={eta} k={model.k}")
    print(args.model_out)
    print(args.cv_out)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = FittedModel.load(args.model)
    ds = read_dataset(args.data)
    pred = model.predict(ds.X, grid=ds.grid)
    rows = [[i, *map(float, pred[i])] for i in range(pred.shape[0])]
    write_table(
        args.out,
        rows,
        ["sample_id", *[f"y{r}" for r in range(pred.shape[1])]],
        {"command": "predict", "model": os.path.basename(args.model)},
    )
    print(args.out)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    model = FittedModel.load(args.model)
    train = read_dataset(args.data)
    new = read_dataset(args.new)
    limits = bootstrap_intervals(
        train,
        model.basis,
        model.config,
        new.X,
        k=model.k,
        n_boot=args.reps,
        level=args.level,
        seed=args.seed,
        k_rule=args.k_rule,
    )
    rows = []
    for i in range(limits.shape[0]):
        for r in range(limits.shape[1]):
            rows.append([i, r, float(limits[i, r, 0]), float(limits[i, r, 1])])
    write_table(
        args.out,
        rows,
        ["sample_id", "response", "lower", "upper"],
        {
            "command": "bootstrap",
            "seed": args.seed,
            "reps": args.reps,
            "level": args.level,
            "k_rule": args.k_rule,
        },
    )
    print(args.out)
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.figure == 1:
        errs = fig1_curves(args.m, args.case, args.rho)
        rows = [[k, float(errs[k])] for k in range(errs.size)]
        write_table(
            args.out,
            rows,
            ["K", "relative_error"],
            {"command": "demo", "figure": 1, "case": args.case, "rho": args.rho,
             "m": args.m},
        )
    else:
        errs = brownian_demo()
        rows = [
            [k, float(errs["optimal"][k]), float(errs["fpca"][k]), float(errs["fpls"][k])]
            for k in range(errs["optimal"].size)
        ]
        write_table(
            args.out,
            rows,
            ["K", "optimal", "fpca", "fpls"],
            {"command": "demo", "figure": 2},
        )
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark harness


def _default_methods(sim_id: int) -> list:
    if sim_id <= 2:
        return ["smooth"]
    if sim_id == 3:
        return ["sparse", "smooth"]
    return ["sparse"]


def _bench_replicate(scenario: SimScenario, rep: int, methods, train_n, test_n,
                     basis_dim, seed):
    """One replicate: generate, tune by CV, fit, score. Pure given inputs."""
    from .basis import make_basis

    inst = ScenarioInstance(
        SimScenario(
            sim_id=scenario.sim_id,
            m=scenario.m,
            sigma=scenario.sigma,
            rho=scenario.rho,
            lag=scenario.lag,
            n_times=scenario.n_times,
            seed=seed * 1_000_003 + rep,
        )
    )
    train = inst.sample(train_n, sample_seed=1)
    test = inst.sample(test_n, sample_seed=2)
    spec = make_basis(basis_dim, 3)
    out = {}
    for method in methods:
        if method == "smooth":
            cv = cv_small_p(train, spec, seed=seed + rep)
            mode = "smooth"
        else:
            cv = cv_large_p(train, spec, seed=seed + rep)
            mode = "smooth-sparse"
        tau, lam, eta, k = cv.best
        config = PenaltyConfig(mode=mode, tau=tau, lam=lam, eta=eta)
        model = fit_model(train, spec, config, k=None)
        if k < model.k:
            model = fit_model(train, spec, config, k=k, components=model.components)
        err = mspe(model.predict(test.X), test.truth)
        rec = {"mspe": err, "k": model.k}
        if train.p > 1 and train.support and len(train.support) < train.p:
            sens, spec_ = sens_spec(
                model.selected_predictors(), train.support, train.p
            )
            rec["sensitivity"] = sens
            rec["specificity"] = spec_
        out[method] = rec
    return out


def cmd_bench(args) -> int:
    methods = (
        args.methods.split(",") if args.methods else _default_methods(args.sim)
    )
    for mth in methods:
        if mth not in ("smooth", "sparse"):
            raise ValueError(f"unknown method {mth!r}")
    reps = 100 if args.full else args.reps
    cells = (
        [(s, m) for s in _SIGMA_CELLS for m in _M_CELLS]
        if args.full
        else [(args.sigma, args.m)]
    )
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)

    rows = []
    for sigma, m in cells:
        scenario = _scenario(args, m=m, sigma=sigma)
        results = _run_replicates(
            scenario, reps, methods, args.train_n, args.test_n, args.basis_dim,
            args.seed, threads,
        )
        for method in methods:
            errs = np.array([r[method]["mspe"] for r in results])
            row = [
                args.sim, method, sigma, m,
                float(args.rho) if args.sim == 3 else "",
                int(args.lag) if args.sim == 4 else "",
                reps, float(errs.mean()), float(errs.std(ddof=1)),
            ]
            if "sensitivity" in results[0][method]:
                sens = np.array([r[method]["sensitivity"] for r in results])
                spc = np.array([r[method]["specificity"] for r in results])
                row += [float(sens.mean()), float(spc.mean())]
            else:
                row += ["", ""]
            ks = np.array([r[method]["k"] for r in results])
            row.append(float(ks.mean()))
            rows.append(row)

    write_table(
        args.out,
        rows,
        ["sim", "method", "sigma", "m", "rho", "lag", "reps",
         "mspe_mean", "mspe_sd", "sensitivity", "specificity", "k_mean"],
        {
            "command": "bench", "sim": args.sim, "seed": args.seed,
            "reps": reps, "methods": ",".join(methods),
            "train_n": args.train_n, "test_n": args.test_n,
            "threads": threads, "full": args.full,
        },
    )
    print(args.out)
    return EXIT_OK


def _run_replicates(scenario, reps, methods, train_n, test_n, basis_dim, seed,
                    threads):
    if threads <= 1:
        return [
            _bench_replicate(scenario, r, methods, train_n, test_n, basis_dim, seed)
            for r in range(reps)
        ]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=threads)(
        delayed(_bench_replicate)(
            scenario, r, methods, train_n, test_n, basis_dim, seed
        )
        for r in range(reps)
    )


if __name__ == "__main__":
    sys.exit(main())
