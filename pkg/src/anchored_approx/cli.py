"""Command-line entry point ``anchored-approx``.

Exit codes: 0 success, 2 input error, 3 numerical error, 4 capability error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .decomposition import component_norms_mc
from .errors import AnchoredApproxError, InputError
from .functions import REGISTRY, make_function
from .index_sets import order_family
from .pde import QoiSpec, default_problem, load_problem, problem_from_dict, sample_ug
from .points import Anchor, Box, read_points_csv, sparse_sampling_set, uniform_sampling_set, write_points_csv
from .regression import fit_plain, fit_weighted, predict
from .weights import (
    WeightScheme,
    epsilon,
    gamma_weight,
    rho,
    select_order,
    tail_sum_bound,
    tail_sum_exact,
)

COMMANDS = ("decompose", "points", "weights", "fit", "predict", "rates", "pde-sample", "pde-pipeline")


def _floats(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, list):
        return [float(v) for v in text]
    p = Path(str(text))
    if p.is_file():
        text = p.read_text()
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise InputError(f"cannot parse a list of numbers from {text!r}") from None


def _vec(text, d: int, name: str) -> np.ndarray:
    vals = _floats(text)
    if len(vals) == 1:
        return np.full(d, vals[0])
    if len(vals) != d:
        raise InputError(f"{name} needs 1 or {d} values")
    return np.array(vals)


def _box_anchor(args, d: int) -> tuple[Box, Anchor]:
    box = Box(_vec(args.box[0], d, "box"), _vec(args.box[1], d, "box"))
    anchor = Anchor(_vec(args.anchor, d, "anchor"))
    anchor.check(box)
    return box, anchor


def cmd_decompose(args) -> None:
    if args.function is None or args.dim is None:
        raise InputError("decompose needs --function and --dim")
    d = args.dim
    f = make_function(args.function, d)
    box, anchor = _box_anchor(args, d)
    family = order_family(d, args.family_order)
    norms = component_norms_mc(f, family, anchor, box, args.samples, args.seed)
    rows = [[str(u), u.card, norms[u]] for u in family]
    ex.write_table_csv(args.out, ["subset", "card", "rms"], rows,
                       {"function": args.function, "samples": args.samples, "seed": args.seed})


def _sampling(args, d: int):
    box, anchor = _box_anchor(args, d)
    family = order_family(d, args.family_order)
    if args.scheme == "uniform":
        return uniform_sampling_set(family, anchor, box, args.m)
    return sparse_sampling_set(family, anchor, box, args.q)


def cmd_points(args) -> None:
    if args.dim is None:
        raise InputError("points needs --dim")
    S = _sampling(args, args.dim)
    write_points_csv(args.out, S, {"scheme": args.scheme})


def cmd_weights(args) -> None:
    if args.alpha is None:
        raise InputError("weights needs --alpha")
    scheme = WeightScheme.pod(args.c, args.n, args.m, _floats(args.alpha))
    d = scheme.d
    L = args.order
    if not 0 <= L <= d:
        raise InputError(f"--order must lie in [0, {d}]")
    family = order_family(d, L)
    summary = {
        "d": d, "c": args.c, "n": args.n, "m": args.m, "rho": rho(args.c), "order": L,
    }
    if d <= 24:
        summary["tail_exact_e1"] = tail_sum_exact(scheme, family, 1.0)
        summary["tail_exact_e1/2"] = tail_sum_exact(scheme, family, 0.5)
    bound = tail_sum_bound(scheme, L)
    summary.update(
        tail_bound=bound.value if bound.feasible else None, feasible=bound.feasible,
        alpha_sum=bound.alpha_sum, alpha_limit=bound.limit, q=bound.q, C2=bound.c2,
    )
    eps = epsilon(args.c, scheme.alpha)
    summary.update(epsilon=eps.value, epsilon_in_unit=eps.in_unit_interval,
                   condpsi_max=eps.max_ratio_ok, condpsi_sum=eps.sum_ok)
    if args.tol is not None:
        sel = select_order(scheme, d, args.tol, args.exponent)
        summary.update(selected_order=sel.order, selected_met=sel.met, selection_mode=sel.mode)
    rows = [[str(u), u.card, gamma_weight(scheme, u)] for u in family]
    ex.write_table_csv(args.out, ["subset", "card", "gamma"], rows, summary)


def _lambda_spec(args) -> dict:
    spec = {"kind": args.lambda_rule}
    if args.lambda_rule == "fixed":
        if args.lam is None:
            raise InputError("--lambda-rule fixed needs --lam")
        spec["lam"] = args.lam
    elif args.lambda_rule == "ratio_f1_f2":
        if args.F1 is None or args.F2 is None:
            raise InputError("--lambda-rule ratio_f1_f2 needs --F1 and --F2")
        spec.update(F1=args.F1, F2=args.F2)
    else:
        spec["sigma"] = args.sigma
    return spec


def cmd_fit(args) -> None:
    if args.function is None or args.points is None:
        raise InputError("fit needs --function and --points")
    S = read_points_csv(args.points)
    d = S.d
    X = S.points
    if args.function in REGISTRY:
        y = make_function(args.function, d)(X)
    else:
        y = ex.read_values_csv(args.function)
        if y.size != X.shape[0]:
            raise InputError(f"{args.function} has {y.size} values for {X.shape[0]} points")
    kspec = {"kind": args.kernel}
    if args.kernel == "pinned_matern":
        kspec.update(nu=args.nu, lengthscale=args.lengthscale)
    wspec = {"kind": "constant", "gamma": args.gamma}
    scheme = ex.weight_scheme_from_config(wspec)
    kernel = ex.kernel_from_config(kspec, S.family, S.anchor, S.box, scheme)
    lspec = _lambda_spec(args)
    lam = ex._lambda_for(lspec, S, S.family, d)
    weighted = args.weighted if args.weighted is not None else args.lambda_rule != "mixed_logN"
    model = fit_weighted(kernel, S, y, lam) if weighted else fit_plain(kernel, X, y, lam)
    ex.write_model_csv(args.out, model, S, kspec, wspec)


def cmd_predict(args) -> None:
    if args.model is None or args.eval is None:
        raise InputError("predict needs --model and --eval")
    model = ex.read_model_csv(args.model)
    P = ex.read_eval_points(args.eval)
    if P.shape[1] != model.kernel.d:
        raise InputError("evaluation points and model dimensions differ")
    vals = predict(model, P)
    d = P.shape[1]
    rows = [list(p) + [v] for p, v in zip(P, vals)]
    ex.write_table_csv(args.out, [f"x{j + 1}" for j in range(d)] + ["prediction"], rows)


def cmd_rates(args) -> None:
    if args.config_data is None:
        raise InputError("rates needs --config")
    cfg = dict(args.config_data)
    if args.seed_given:
        cfg["seed"] = args.seed
    report = ex.run_convergence(ex.ExperimentConfig.from_dict(cfg))
    ex.write_rate_csv(args.out, report)


def _problem(args):
    if args.config_data is not None and "problem" in args.config_data:
        return problem_from_dict(args.config_data["problem"])
    if args.problem is not None:
        return load_problem(args.problem)
    if args.d is None:
        raise InputError("pde-sample needs --d (or a problem in --config)")
    return default_problem(args.d, args.beta, args.theta)


def cmd_pde_sample(args) -> None:
    if args.points is None:
        raise InputError("pde-sample needs --points")
    problem = _problem(args)
    P = ex.read_eval_points(args.points)
    kind = "point_eval" if args.qoi == "point" else "mean_value"
    spec = ex.qoi_from_config({"kind": kind, "x0": args.x0})
    vals, count = sample_ug(problem, spec, P, args.mesh)
    rows = [list(p) + [v] for p, v in zip(P, vals)]
    ex.write_table_csv(args.out, [f"x{j + 1}" for j in range(problem.d)] + ["ug"], rows,
                       {"solves": count, "mesh": args.mesh, "qoi": args.qoi})


def cmd_pde_pipeline(args) -> None:
    if args.config_data is not None:
        cfg = dict(args.config_data)
    else:
        if args.d is None:
            raise InputError("pde-pipeline needs --config or --d")
        cfg = {"problem": {"d": args.d, "beta": args.beta, "theta": args.theta}}
        cfg.update(c=args.c, tolerance=args.tol, q=args.q, mesh=args.mesh)
        if args.order is not None:
            cfg["order"] = args.order
    if args.seed_given or "seed" not in cfg:
        cfg["seed"] = args.seed
    report = ex.run_pde_pipeline(ex.PipelineConfig.from_dict(cfg))
    ex.write_pipeline_csv(args.out, [report])


HANDLERS = {
    "decompose": cmd_decompose,
    "points": cmd_points,
    "weights": cmd_weights,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "rates": cmd_rates,
    "pde-sample": cmd_pde_sample,
    "pde-pipeline": cmd_pde_pipeline,
}


def _add_geometry(p, default_order: int) -> None:
    p.add_argument("--dim", type=int, help="dimension d")
    p.add_argument("--anchor", default="0", help="anchor value or comma list")
    p.add_argument("--box", nargs=2, default=["0", "1"], metavar=("LO", "HI"), help="box bounds")
    p.add_argument("--family-order", type=int, default=default_order, help="all subsets with at most this many elements")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output CSV path (default stdout)")

    parser = argparse.ArgumentParser(prog="anchored-approx", parents=[common],
                                     description="Anchored decompositions and kernel approximation on Lambda-subspaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["decompose"] = sub.add_parser("decompose", parents=[common], help="anchored component norms")
    p.add_argument("--function", help=f"one of {', '.join(REGISTRY)}")
    p.add_argument("--samples", type=int, default=4096)
    _add_geometry(p, 2)

    p = subs["points"] = sub.add_parser("points", parents=[common], help="anchored sampling sets")
    _add_geometry(p, 1)
    p.add_argument("--scheme", choices=["uniform", "sparse"], default="uniform")
    p.add_argument("--m", type=int, default=5, help="points per axis (uniform)")
    p.add_argument("--q", type=int, default=2, help="sparse-grid level offset")

    p = subs["weights"] = sub.add_parser("weights", parents=[common], help="weights, tail sums and order selection")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--alpha", help="comma list or file of alpha_j")
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--tol", type=float)
    p.add_argument("--exponent", type=float, default=1.0, choices=[0.5, 1.0])

    p = subs["fit"] = sub.add_parser("fit", parents=[common], help="penalized least-squares fit")
    p.add_argument("--function", help="registry name or CSV whose last column holds the values")
    p.add_argument("--points", help="points CSV written by 'points'")
    p.add_argument("--lambda-rule", default="sobolev_h", choices=["fixed", "ratio_f1_f2", "sobolev_h", "mixed_logN"])
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--lam", type=float)
    p.add_argument("--F1", type=float)
    p.add_argument("--F2", type=float)
    p.add_argument("--kernel", default="anchored_h1", choices=["anchored_h1", "pinned_matern", "pinned_brownian"])
    p.add_argument("--nu", type=float, default=2.5)
    p.add_argument("--lengthscale", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0, help="constant weight")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--weighted", dest="weighted", action="store_true", default=None)
    g.add_argument("--plain", dest="weighted", action="store_false")

    p = subs["predict"] = sub.add_parser("predict", parents=[common], help="evaluate a fitted model")
    p.add_argument("--model")
    p.add_argument("--eval", help="CSV of points")

    subs["rates"] = sub.add_parser("rates", parents=[common], help="convergence ladder from a JSON config")

    p = subs["pde-sample"] = sub.add_parser("pde-sample", parents=[common], help="sample the PDE quantity of interest")
    p.add_argument("--d", type=int)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--mesh", type=int, default=100)
    p.add_argument("--points")
    p.add_argument("--problem", help="problem JSON file")
    p.add_argument("--qoi", default="mean", choices=["mean", "point"])
    p.add_argument("--x0", type=float, default=0.5)

    p = subs["pde-pipeline"] = sub.add_parser("pde-pipeline", parents=[common], help="end-to-end PDE approximation")
    p.add_argument("--d", type=int)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--c", type=float, default=0.6)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--order", type=int)
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--mesh", type=int, default=100)
    return parser, subs


def _load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object")
    return data


def _parse(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    config = getattr(args, "config", None)
    data = _load_config(config) if config else None
    if data is not None and args.command not in ("rates", "pde-pipeline"):
        # flat config keys act as defaults for the subcommand's flags
        sp = subs[args.command]
        dests = {a.dest for a in sp._actions}
        defaults = {k.replace("-", "_"): v for k, v in data.items() if k.replace("-", "_") in dests}
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    args.config_data = data
    args.seed_given = hasattr(args, "seed")
    if not args.seed_given:
        args.seed = 0
    if not hasattr(args, "out"):
        args.out = None
    return args


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        HANDLERS[args.command](args)
    except AnchoredApproxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
