"""Command-line entry point: ``kronmc <command> ...``.

Every command writes its outputs to the paths given on the command line and
a JSON report embedding the resolved run configuration.  Failures print a
JSON object ``{"error": <name>, "message": ...}`` on stderr and exit with a
nonzero status.
"""

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .aggregation import (
    aggregate_estimate,
    argmin_curve,
    cv_mse_curve,
    cv_partition,
    pad_dimensions,
)
from .als import ConvergencePolicy, complete
from .core import parse_candidates, parse_configuration
from .exceptions import KronMCError
from .io import load_mask, load_matrix, save_mask, save_matrix
from .selection import rank_configurations
from .simulation import (
    SCENARIOS,
    run_aggregation_study,
    run_selection_sweep,
    with_overrides,
)

SEED_ENV = "KRONMC_SEED"

logger = logging.getLogger("kronmc")


def _default_seed():
    value = os.environ.get(SEED_ENV)
    return int(value) if value not in (None, "") else 0


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _run_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "log_level")}
    return cfg


def _report(args, body):
    return {
        "run_config": _run_config(args),
        "metadata": {
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "version": __version__,
        },
        **body,
    }


def _sidecar(path, suffix):
    stem, _ = os.path.splitext(path)
    return stem + suffix


def _observation(args):
    """Zero-filled observation and boolean mask from ``--input`` with ``--mask``/``--rate``."""
    Y = load_matrix(args.input)
    if args.mask is not None:
        W = np.asarray(load_mask(args.mask, Y.shape, kind=args.mask_format), dtype=bool)
    else:
        if not 0 < args.rate <= 1:
            raise ValueError(f"--rate must lie in (0, 1], got {args.rate}")
        rng = np.random.default_rng(args.seed)
        W = rng.random(Y.shape) < args.rate
    return np.where(W, Y, 0.0), W


def _policy(args):
    return ConvergencePolicy(
        max_iterations=args.max_iter,
        relative_tolerance=args.tol,
        singular=args.singular,
    )


def cmd_select_config(args):
    Y, W = _observation(args)
    configs = parse_candidates(args.candidate, *Y.shape)
    ranking = rank_configurations(Y, W, configs, n_jobs=args.threads)
    body = {
        "selected": ranking.best.to_dict(),
        "ranking": ranking.to_list(),
        "observed": int(W.sum()),
        "shape": list(Y.shape),
    }
    _dump_json(_report(args, body), args.out)


def cmd_complete(args):
    Y, W = _observation(args)
    if args.config is not None:
        config = parse_configuration(args.config, *Y.shape)
        ranking = None
    else:
        configs = parse_candidates(args.candidate, *Y.shape)
        ranking = rank_configurations(Y, W, configs, n_jobs=args.threads)
        config = ranking.best
    model, X_hat = complete(Y, W, config, args.rank, _policy(args))
    if args.trim:
        X_hat = np.clip(X_hat, 0.0, 1.0)
    save_matrix(args.out, X_hat)
    info = model.info
    body = {
        "config": config.to_dict(),
        "rank": args.rank,
        "lambdas": model.lambdas.tolist(),
        "iterations": info.iterations,
        "converged": info.converged,
        "residual_history": list(info.residual_history),
        "ranking": ranking.to_list() if ranking is not None else None,
    }
    _dump_json(_report(args, body), args.report or _sidecar(args.out, ".json"))


def _weights(args, n):
    if args.weights == "equal":
        return None
    w = np.loadtxt(args.weights, delimiter=",", ndmin=1).ravel()
    if w.size < n or np.any(w[:n] <= 0):
        raise ValueError(f"--weights file needs at least {n} positive values")
    return w


def cmd_aggregate(args):
    Y, W = _observation(args)
    configs = parse_candidates(args.candidate, *Y.shape)
    ranking = rank_configurations(Y, W, configs, n_jobs=args.threads)
    policy = _policy(args)
    curve = None
    if args.num_configs == "auto":
        k_max = min(args.max_configs, len(ranking))
        weights = _weights(args, k_max)
        partition = cv_partition(W, args.folds, np.random.default_rng([args.seed, 1]))
        curve = cv_mse_curve(Y, W, partition, ranking, k_max, weights, args.rank, policy,
                             args.fallback)
        d = argmin_curve(curve)
    else:
        d = int(args.num_configs)
        weights = _weights(args, d)
    est = aggregate_estimate(Y, W, ranking, d, weights, args.rank, policy, args.fallback)
    X_hat = np.clip(est.combined, 0.0, 1.0) if args.trim else est.combined
    save_matrix(args.out, X_hat)
    body = {
        "num_configs": d,
        "ranking": ranking.to_list(),
        "weights": est.weights.tolist(),
        "fallback_count": est.fallback_count,
        "mean_filled_count": int(est.mean_filled.sum()),
        "dropped_configs": [str(ranking[k].config) for k in est.dropped],
        "cv_mse": curve.tolist() if curve is not None else None,
    }
    _dump_json(_report(args, body), args.report or _sidecar(args.out, ".json"))


def cmd_pad(args):
    Y = load_matrix(args.input)
    W = load_mask(args.mask, Y.shape, kind=args.mask_format)
    P_star, Q_star = (int(v) for v in args.to.lower().split("x"))
    Yp, Wp = pad_dimensions(np.where(np.asarray(W), Y, 0.0), W, P_star, Q_star)
    save_matrix(args.out, Yp)
    save_mask(args.mask_out or _sidecar(args.out, "_mask.csv"), Wp)


# Desk-scale sweep cells are the two transition points checked in the test suite.
SWEEP_SETUPS = {
    "desk": [dict(M=9, N=9, true_config=(4, 4), cells=[(0.2, 0.5, 7), (0.1, 0.3, 5)])],
    "full": [
        dict(M=9, N=9, true_config=(4, 4), taus=(0.1, 0.2), phi2s=(0.3, 0.4, 0.5),
             candidate_s=(5, 6, 7)),
        dict(M=10, N=10, true_config=(5, 4), taus=(0.1, 0.2), phi2s=(0.3, 0.4, 0.5),
             candidate_s=(5, 6, 7)),
    ],
}
SCALE_REPLICATES = {"desk": 20, "full": 100}


def _write_csv(path, rows):
    if not rows:
        return
    fields = list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: json.dumps(v) if isinstance(v, (list, tuple)) else v
                             for k, v in row.items()})


def _snr_grid(text):
    if text is None:
        return None
    return [float(v) for v in text.split(",")]


def cmd_simulate(args):
    replicates = args.replicates or SCALE_REPLICATES[args.scale]
    reports = []
    if args.scenario == "sweep":
        for setup in SWEEP_SETUPS[args.scale]:
            reports.append(run_selection_sweep(snrs=_snr_grid(args.snr_grid),
                                               replicates=replicates, seed=args.seed, **setup))
    else:
        name = "S1" if args.scenario == "missing-block" else args.scenario
        spec = with_overrides(SCENARIOS[name], replicates=replicates, seed=args.seed,
                              folds=args.folds)
        block = (4, 5) if args.scenario == "missing-block" else None
        cv = False if (block or args.no_cv) else True
        reports.append(run_aggregation_study(spec, d_max=args.d_max, kranks=(1, 2),
                                             forced_missing_block=block, cv=cv))
    os.makedirs(args.out, exist_ok=True)
    tables, records = {}, []
    for rep in reports:
        for key, rows in rep.tables.items():
            tables.setdefault(key, []).extend(rows)
        records.extend(rep.records)
    for key, rows in tables.items():
        _write_csv(os.path.join(args.out, f"{key}.csv"), rows)
    _write_csv(os.path.join(args.out, "records.csv"), records)
    body = {"reports": [{"kind": r.kind, "settings": r.settings, "tables": r.tables}
                        for r in reports]}
    _dump_json(_report(args, body), os.path.join(args.out, "report.json"))


def _add_observation_args(sp):
    sp.add_argument("--input", required=True, help="matrix file (.csv or .pgm)")
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--mask", help="observation mask: dense 0/1 CSV or 1-based i,j list")
    group.add_argument("--rate", type=float, help="observe a random fraction of entries")
    sp.add_argument("--mask-format", choices=("auto", "dense", "index"), default="auto")


def _add_fit_args(sp, rank_default=1):
    sp.add_argument("--rank", type=int, default=rank_default, help="K-rank of the fit")
    sp.add_argument("--max-iter", type=int, default=200)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--singular", choices=("raise", "ridge"), default="raise")
    sp.add_argument("--trim", action="store_true", help="clamp the output to [0, 1]")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kronmc", description="Matrix completion with Kronecker product models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=_default_seed(),
                        help=f"random seed (default: ${SEED_ENV} or 0)")
    parser.add_argument("--threads", type=int, default=1,
                        help="threads used to score candidate configurations")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("select-config", help="rank candidate configurations")
    _add_observation_args(sp)
    sp.add_argument("--candidate", default="s=6", help="'s=INT' or 'delta=FLOAT'")
    sp.add_argument("--out", default="-", help="JSON report path (default: stdout)")
    sp.set_defaults(func=cmd_select_config)

    sp = sub.add_parser("complete", help="complete a matrix under one configuration")
    _add_observation_args(sp)
    sp.add_argument("--config", help="configuration 'PxQ'; selected from --candidate if absent")
    sp.add_argument("--candidate", default="s=6")
    _add_fit_args(sp)
    sp.add_argument("--out", required=True, help="completed matrix (.csv or .pgm)")
    sp.add_argument("--report", help="JSON diagnostics path (default: next to --out)")
    sp.set_defaults(func=cmd_complete)

    sp = sub.add_parser("aggregate", help="aggregate completions over top configurations")
    _add_observation_args(sp)
    sp.add_argument("--candidate", default="s=6")
    _add_fit_args(sp)
    sp.add_argument("--num-configs", default="auto", help="number D, or 'auto' for CV")
    sp.add_argument("--max-configs", type=int, default=10, help="largest D tried by 'auto'")
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--weights", default="equal", help="'equal' or a CSV file of weights")
    sp.add_argument("--fallback", choices=("best_feasible", "benchmark"),
                    default="best_feasible")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_aggregate)

    sp = sub.add_parser("simulate", help="run a simulation study")
    sp.add_argument("--scenario", required=True,
                    choices=("L1", "S1", "L2", "S2", "sweep", "missing-block"))
    sp.add_argument("--scale", choices=("desk", "full"), default="desk")
    sp.add_argument("--replicates", type=int, help="override the scale's replicate count")
    sp.add_argument("--snr-grid", help="comma-separated SNR values for the sweep")
    sp.add_argument("--d-max", type=int, default=10)
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--no-cv", action="store_true", help="skip cross-validation curves")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("pad", help="zero-pad a matrix and its mask to a larger size")
    sp.add_argument("--input", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--mask-format", choices=("auto", "dense", "index"), default="auto")
    sp.add_argument("--to", required=True, help="target size 'PxQ'")
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask-out")
    sp.set_defaults(func=cmd_pad)
    return parser


def _error_payload(err):
    payload = {"error": type(err).__name__, "message": str(err)}
    for attr in ("line", "position", "fold", "row", "side"):
        value = getattr(err, attr, None)
        if value is not None:
            payload[attr] = value
    for attr in ("rows", "cols"):
        value = getattr(err, attr, None)
        if value is not None:
            payload[attr] = list(value)
    return payload


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (KronMCError, ValueError, OSError) as err:
        sys.stderr.write(json.dumps(_error_payload(err)) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
