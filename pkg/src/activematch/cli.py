"""Command-line interface: ``match``, ``simulate``, ``demo-fig2`` and ``synth``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .core import ActiveMatchError, InfeasibleError, MatchConstraints, ModelFitError, ScorePosterior, objective_value
from .data import RatingsData, filter_ratings, generate_synthetic, load_ratings_csv, save_ratings_csv, toy_fig2, TOY_RANGE
from .matcher import MatchInstance, solve_matching
from .numerics import RngStream
from .probmatch import estimate_prob_matching
from .scoremodel import fit, predictive_moments
from .simulator import compare_strategies

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_MODEL = 5

RESULTS_HEADER = (
    "trial", "round", "strategy", "cum_queries_per_user", "objective",
    "objective_vs_random", "fallback_count", "num_observed",
)
SUMMARY_HEADER = (
    "strategy", "round", "num_trials", "cum_queries_per_user", "objective", "objective_se",
    "objective_vs_random", "objective_vs_random_se", "fallback_count",
)

log = logging.getLogger("activematch")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{value:.6f}"
    return str(value)


def write_rows(path, header, rows) -> None:
    out = sys.stdout if str(path) == "-" else open(path, "w", newline="", encoding="utf-8")
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[h]) for h in header])
    finally:
        if out is not sys.stdout:
            out.close()


def _constraint_doc(args) -> dict:
    keys = ("r_min", "r_max", "p_min", "p_max")
    given = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return given


def _load_dataset(doc: dict, ratings: str | None) -> RatingsData:
    ds = doc.get("dataset") or {}
    path = ratings or ds.get("path")
    if path:
        data = load_ratings_csv(path)
    elif ds.get("synthetic") is not None:
        syn = dict(ds["synthetic"])
        if "score_range" in syn:
            syn["score_range"] = tuple(syn["score_range"])
        matrix = generate_synthetic(**syn)
        data = RatingsData(matrix, tuple(map(str, range(matrix.num_users))), tuple(map(str, range(matrix.num_items))))
    else:
        raise cfgmod.ConfigError("no dataset: give a ratings file or dataset.synthetic in the config")
    filt = ds.get("filter")
    if filt:
        data = filter_ratings(data, **filt)
    return data


def cmd_match(args) -> int:
    data = load_ratings_csv(args.ratings)
    if args.min_ratings or args.top_items or args.max_users:
        data = filter_ratings(data, args.min_ratings or 0, args.top_items, args.max_users, args.seed)
    scores = data.matrix.fully_observed()
    given = _constraint_doc(args)
    constraints = cfgmod.default_constraints(*scores.shape)
    if given:
        constraints = MatchConstraints(**{**constraints.__dict__, **given})

    if args.fill_missing is not None or scores.ground_truth.all():
        grid = np.where(scores.ground_truth, scores.values, args.fill_missing or 0.0)
    else:
        model_cfg = cfgmod.model_config(cfgmod.load_config(args.config).get("model"))
        model = fit(scores, model_cfg, RngStream(args.seed))
        grid = predictive_moments(model, scores).mean
    y = solve_matching(MatchInstance(grid, constraints))
    known = objective_value(y, scores, restrict_to_ground_truth=True)
    estimated = objective_value(y, grid)
    rows = [{"user_id": data.user_ids[r], "item_id": data.item_ids[p]} for r, p in y.pairs()]
    write_rows(args.output, ("user_id", "item_id"), rows)
    print(f"objective_known {known:.6f}", file=sys.stderr if args.output == "-" else sys.stdout)
    print(f"objective_estimated {estimated:.6f}", file=sys.stderr if args.output == "-" else sys.stdout)
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = cfgmod.load_config(args.config)
    sim = dict(doc.get("simulation") or {})
    for key in ("batch_size", "num_rounds", "mode", "init_observed", "num_trials", "base_seed", "num_prob_samples"):
        value = getattr(args, key)
        if value is not None:
            sim[key] = value
    if args.strategies:
        sim["strategies"] = args.strategies.split(",")
    doc["simulation"] = sim
    given = _constraint_doc(args)
    if given:
        doc["constraints"] = {**(doc.get("constraints") or {}), **given}
    model = dict(doc.get("model") or {})
    for key in ("latent_dim", "alpha", "beta0_u", "beta0_v"):
        value = getattr(args, key)
        if value is not None:
            model[key] = value
    doc["model"] = model

    data = _load_dataset(doc, args.ratings)
    config = cfgmod.sim_config(doc, *data.matrix.shape)
    result = compare_strategies(data.matrix, config, workers=args.workers)

    output = args.output or doc.get("output") or "results.csv"
    write_rows(output, RESULTS_HEADER, result.rows())
    summary = args.summary or doc.get("summary")
    if summary:
        rows = sorted(result.summary(), key=lambda r: (r["strategy"], r["round"]))
        write_rows(summary, SUMMARY_HEADER, rows)
    log.info("wrote %s", output)
    return EXIT_OK


def _print_grid(title: str, grid, decimals: int) -> None:
    print(title)
    for row in np.asarray(grid, dtype=float):
        print("  " + " ".join(f"{v:6.{decimals}f}" for v in row))


def cmd_demo_fig2(args) -> int:
    scores, constraints = toy_fig2(args.seed)
    mean = scores.values
    lp = solve_matching(MatchInstance(mean, constraints))
    width = TOY_RANGE[1] - TOY_RANGE[0]
    _print_grid("scores S", mean, 1)
    _print_grid("LP matching", lp.assign, 0)
    for label, var in (("low", args.low_variance), ("high", args.high_variance or (width / 2) ** 2)):
        post = ScorePosterior(mean, np.full(mean.shape, var))
        ybar = estimate_prob_matching(post, None, constraints, args.samples, RngStream(args.seed))
        _print_grid(f"Ybar, {label} variance ({var:g})", np.round(ybar.prob, 2), 2)
    return EXIT_OK


def cmd_synth(args) -> int:
    matrix = generate_synthetic(
        args.users, args.items, args.rank, args.noise_sd, (args.low, args.high), args.density, args.seed
    )
    save_ratings_csv(args.output, matrix)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activematch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def constraint_flags(p):
        for name in ("r_min", "r_max", "p_min", "p_max"):
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=int)

    p = sub.add_parser("match", help="solve one matching from a ratings file")
    p.add_argument("ratings")
    constraint_flags(p)
    p.add_argument("--config")
    p.add_argument("--fill-missing", type=float, help="score for unrated pairs instead of model predictions")
    p.add_argument("--min-ratings", type=int)
    p.add_argument("--top-items", type=int)
    p.add_argument("--max-users", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("simulate", help="compare query strategies, write results CSV")
    p.add_argument("ratings", nargs="?")
    p.add_argument("--config")
    constraint_flags(p)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--num-rounds", type=int)
    p.add_argument("--mode", choices=("parallel", "sequential"))
    p.add_argument("--init-observed", type=int)
    p.add_argument("--num-trials", type=int)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--num-prob-samples", type=int)
    p.add_argument("--strategies", help="comma separated, e.g. random,se,ym,ybar_m,ybar_e")
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta0-u", type=float)
    p.add_argument("--beta0-v", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("demo-fig2", help="toy 3x6 problem: LP matching vs probabilistic matching")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--low-variance", type=float, default=1e-9)
    p.add_argument("--high-variance", type=float)
    p.set_defaults(func=cmd_demo_fig2)

    p = sub.add_parser("synth", help="write a synthetic low-rank ratings file")
    p.add_argument("--users", type=int, default=60)
    p.add_argument("--items", type=int, default=12)
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--low", type=float, default=-10.0)
    p.add_argument("--high", type=float, default=10.0)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: infeasible constraints: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ModelFitError as exc:
        print(f"error: model fit failed: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ActiveMatchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
