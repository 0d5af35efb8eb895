"""Convergence experiments and the parametric-PDE pipeline.

Both drivers are deterministic for a fixed configuration: test points come
from a seeded generator and every other stage is a pure computation.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decomposition import BlackBoxFunction
from .errors import AnchoredApproxError, InputError
from .functions import REGISTRY, bump_sum, sin_product
from .index_sets import DownwardClosedFamily, order_family, parse_subset
from .kernels import LambdaKernel, make_lambda_kernel
from .pde import (
    PARAM_HALF_WIDTH,
    QoiSpec,
    coercivity_check,
    problem_from_dict,
    riesz_norm,
    ug_function,
)
from .points import (
    Anchor,
    Box,
    SamplingSet,
    output_stream,
    read_csv_with_meta,
    sparse_sampling_set,
    uniform_sampling_set,
)
from .regression import LambdaRule, RegressionModel, fit_plain, fit_weighted, predict, select_lambda
from .weights import (
    WeightScheme,
    bochner_norm_bound,
    epsilon,
    gamma_weight,
    select_order,
    tail_sum_exact,
)

MC_TEST_SIZE = 1 << 14
GRID_TEST_DIM = 4
DEFAULT_TEST_GRID = 9
PLATEAU_RATIO = 0.5
PLATEAU_BAND = 2.0
MIN_RATE_ROWS = 3


def _vector(value, d: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        return np.full(d, float(arr[0]))
    if arr.size != d:
        raise InputError(f"{name} needs 1 or {d} entries, got {arr.size}")
    return arr


def family_from_config(spec, d: int) -> DownwardClosedFamily:
    """``{"order": n}`` or ``{"members": ["{}", "{1}", ...]}`` (closed automatically)."""
    if isinstance(spec, int):
        return order_family(d, spec)
    if "order" in spec:
        return order_family(d, int(spec["order"]))
    if "members" in spec:
        return DownwardClosedFamily.closure([parse_subset(s, d) for s in spec["members"]], d)
    raise InputError("family needs 'order' or 'members'")


@dataclass
class ExperimentConfig:
    """Everything needed to run a convergence ladder.

    ``function`` is ``{"name": <registry name or 'bump-sum'>, "params": {...}}``;
    ``points`` is ``{"scheme": "uniform"|"sparse", "ladder": [...]}``;
    ``lam`` follows :class:`LambdaRule` (``kind`` plus parameters);
    ``test`` has ``size`` and ``seed`` for Monte Carlo or ``grid`` points per
    axis for tensor test grids (used by default when d <= 4).
    """

    d: int
    function: dict
    seed: int
    anchor: object = 0.0
    lower: object = 0.0
    upper: object = 1.0
    family: dict = field(default_factory=lambda: {"order": 1})
    points: dict = field(default_factory=lambda: {"scheme": "uniform", "ladder": [3, 5, 9]})
    kernel: dict = field(default_factory=lambda: {"kind": "anchored_h1"})
    weights: dict = field(default_factory=lambda: {"kind": "constant", "gamma": 1.0})
    lam: dict = field(default_factory=lambda: {"kind": "sobolev_h", "sigma": 2.0})
    test: dict = field(default_factory=dict)
    delta: float = 0.0
    fit: str | None = None

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        cfg = dict(cfg)
        if "seed" not in cfg:
            raise InputError("experiment config needs an explicit 'seed'")
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
        if "box" in cfg:
            lo, hi = cfg.pop("box")
            cfg["lower"], cfg["upper"] = lo, hi
        known = set(cls.__dataclass_fields__)
        unknown = set(cfg) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        try:
            out = cls(**cfg)
        except TypeError as exc:
            raise InputError(f"bad experiment config: {exc}") from None
        out.validate()
        return out

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None

    def validate(self) -> None:
        if self.d < 1:
            raise InputError("d must be positive")
        self.box
        self.anchor_point.check(self.box)
        if self.points.get("scheme") not in ("uniform", "sparse"):
            raise InputError("points.scheme must be 'uniform' or 'sparse'")
        if not self.points.get("ladder"):
            raise InputError("points.ladder must list at least one rung")

    @property
    def box(self) -> Box:
        return Box(_vector(self.lower, self.d, "lower"), _vector(self.upper, self.d, "upper"))

    @property
    def anchor_point(self) -> Anchor:
        return Anchor(_vector(self.anchor, self.d, "anchor"))

    def build_family(self) -> DownwardClosedFamily:
        return family_from_config(self.family, self.d)


def weight_scheme_from_config(spec: dict) -> WeightScheme:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return WeightScheme.constant(float(spec.get("gamma", 1.0)))
    if kind == "pod":
        return WeightScheme.pod(float(spec["c"]), int(spec.get("n", 0)), int(spec.get("m", 1)), spec["alpha"])
    raise InputError(f"unknown weight scheme {kind!r}")


def kernel_from_config(spec: dict, family, anchor: Anchor, box: Box, gamma) -> LambdaKernel:
    params = {k: v for k, v in spec.items() if k != "kind"}
    return make_lambda_kernel(family, anchor.c, box.lower, box.upper, gamma, spec.get("kind", "anchored_h1"), **params)


def function_from_config(cfg: ExperimentConfig, family: DownwardClosedFamily) -> BlackBoxFunction:
    """The target function, optionally plus delta * prod_j sin(x_j)."""
    spec = cfg.function
    name = spec.get("name")
    params = spec.get("params", {})
    if name == "bump-sum":
        base = bump_sum(cfg.d, family, **params)
    elif name in REGISTRY:
        base = REGISTRY[name](cfg.d, **params)
    else:
        raise InputError(f"unknown function {name!r}")
    delta = float(cfg.delta)
    if delta == 0.0:
        return BlackBoxFunction(base, cfg.d, name=name)
    return BlackBoxFunction(lambda X: base(X) + delta * sin_product(X), cfg.d, name=f"{name}+{delta:g}")


def test_points(d: int, box: Box, test: dict) -> np.ndarray:
    """Tensor grid for d <= 4 (unless a size is requested), else seeded Monte Carlo."""
    grid = test.get("grid")
    if grid is None and "size" not in test and d <= GRID_TEST_DIM:
        grid = DEFAULT_TEST_GRID
    if grid is not None:
        axes = [np.linspace(lo, hi, int(grid)) for lo, hi in zip(box.lower, box.upper)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    rng = np.random.default_rng(int(test.get("seed", 0)))
    return box.sample(int(test.get("size", MC_TEST_SIZE)), rng)


def _lambda_for(rule_spec: dict, sampling: SamplingSet, family: DownwardClosedFamily, d: int) -> float:
    spec = dict(rule_spec)
    kind = spec.pop("kind", "sobolev_h")
    blockwise = spec.pop("blockwise", False)
    rule = LambdaRule(kind, **spec)
    if kind == "sobolev_h":
        if rule.d is None:
            rule.d = d
        if blockwise:
            rule.block_h = [(sampling.block_fill[u], u.card) for u in family]
        elif rule.h is None:
            h = sampling.fill_distance
            if h is None:
                raise InputError("fill distance unavailable for blocks of dimension > 3")
            rule.h = h
    elif kind == "mixed_logN":
        if rule.n is None:
            rule.n = family.max_order
        rule.N = len(sampling)
    return select_lambda(rule)


@dataclass
class RateRow:
    rung: int
    N: int
    h: float | None
    lam: float
    err_l2: float
    err_linf: float
    evals: int
    wall_time: float = 0.0


@dataclass
class RateFit:
    slope: float | None
    used: list
    plateau_index: int | None
    flagged: bool


def fit_rate(xs, errs) -> RateFit:
    """Least-squares slope of log(err) against log(x).

    Pass x = h for slopes in h, or x = 1/N for slopes in N. A rung whose error
    exceeds half the previous one starts a plateau and ends the fitted
    segment; rows within a factor 2 of the final error are then dropped as
    well. Fewer than three usable rows leave the slope undefined (flagged).
    """
    xs = np.asarray(xs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if xs.shape != errs.shape:
        raise InputError("need one error per abscissa")
    plateau = None
    for i in range(1, errs.size):
        if errs[i] > PLATEAU_RATIO * errs[i - 1]:
            plateau = i
            break
    used = list(range(errs.size if plateau is None else plateau))
    if plateau is not None:
        used = [i for i in used if errs[i] > PLATEAU_BAND * errs[-1]]
    used = [i for i in used if errs[i] > 0 and xs[i] > 0]
    if len(used) < MIN_RATE_ROWS:
        return RateFit(None, used, plateau, True)
    slope = np.polyfit(np.log(xs[used]), np.log(errs[used]), 1)[0]
    return RateFit(float(slope), used, plateau, False)


@dataclass
class RateReport:
    rows: list
    fit: RateFit
    abscissa: str

    @property
    def slope(self) -> float | None:
        return self.fit.slope

    @property
    def plateau(self) -> float | None:
        return self.rows[-1].err_l2 if self.fit.plateau_index is not None else None


def run_convergence(cfg: ExperimentConfig) -> RateReport:
    """Fit and test once per ladder rung; rows are sorted by N."""
    family = cfg.build_family()
    box, anchor = cfg.box, cfg.anchor_point
    f = function_from_config(cfg, family)
    scheme = weight_scheme_from_config(cfg.weights)
    kernel = kernel_from_config(cfg.kernel, family, anchor, box, scheme)
    T = test_points(cfg.d, box, dict({"seed": cfg.seed}, **cfg.test))
    fT = f(T)
    f.reset_counter()
    sparse = cfg.points["scheme"] == "sparse"
    weighted = (cfg.fit or ("plain" if sparse else "weighted")) == "weighted"
    rows = []
    for rung in cfg.points["ladder"]:
        t0 = time.perf_counter()
        try:
            if sparse:
                S = sparse_sampling_set(family, anchor, box, int(rung))
            else:
                S = uniform_sampling_set(family, anchor, box, int(rung))
            before = f.eval_counter
            y = f(S.points)
            evals = f.eval_counter - before
            lam = _lambda_for(cfg.lam, S, family, cfg.d)
            model = fit_weighted(kernel, S, y, lam) if weighted else fit_plain(kernel, S.points, y, lam)
            err = predict(model, T) - fT
        except AnchoredApproxError as exc:
            raise type(exc)(f"rung {rung}: {exc}") from exc
        rows.append(
            RateRow(
                int(rung), len(S), S.fill_distance, lam,
                float(np.sqrt(np.mean(err**2))), float(np.max(np.abs(err))), evals,
                time.perf_counter() - t0,
            )
        )
    rows.sort(key=lambda r: r.N)
    if sparse or any(r.h is None for r in rows):
        fit = fit_rate([1.0 / r.N for r in rows], [r.err_l2 for r in rows])
        absc = "1/N"
    else:
        fit = fit_rate([r.h for r in rows], [r.err_l2 for r in rows])
        absc = "h"
    return RateReport(rows, fit, absc)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


RATE_HEADER = ["rung", "N", "h", "lambda", "err_l2", "err_linf", "evals"]


def write_rate_csv(path, report: RateReport) -> None:
    """Rate table; wall times are left out so equal runs give equal bytes."""
    meta = {"abscissa": report.abscissa, "slope": report.slope, "plateau": report.plateau,
            "slope_flagged": report.fit.flagged}
    with output_stream(path) as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATE_HEADER)
        for r in report.rows:
            w.writerow([_fmt(r.rung), _fmt(r.N), _fmt(r.h), _fmt(r.lam), _fmt(r.err_l2), _fmt(r.err_linf), _fmt(r.evals)])


@dataclass
class PipelineConfig:
    """Parametric-PDE pipeline settings.

    ``order`` overrides the selection by ``tolerance``; ``q`` is the sparse
    grid level offset (block u uses level #u + q).
    """

    problem: dict
    seed: int
    qoi: dict = field(default_factory=lambda: {"kind": "mean_value"})
    mesh: int = 100
    c: float = 0.6
    tolerance: float = 1e-3
    order: int | None = None
    q: int = 3
    kernel: dict = field(default_factory=lambda: {"kind": "pinned_matern", "nu": 2.5, "lengthscale": 1.0})
    lam: dict = field(default_factory=lambda: {"kind": "mixed_logN", "sigma": 3.0})
    test: dict = field(default_factory=lambda: {"size": 1024})

    @classmethod
    def from_dict(cls, cfg: dict) -> "PipelineConfig":
        cfg = dict(cfg)
        if "seed" not in cfg:
            raise InputError("pipeline config needs an explicit 'seed'")
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**cfg)
        except TypeError as exc:
            raise InputError(f"bad pipeline config: {exc}") from None


def qoi_from_config(spec: dict) -> QoiSpec:
    kind = spec.get("kind", "mean_value")
    if kind == "mean":
        kind = "mean_value"
    if kind == "weighted_integral":
        raise InputError("weighted_integral needs a weight function and is library-only")
    return QoiSpec(kind, float(spec.get("x0", 0.5)), float(spec.get("width", 0.0)))


def qoi_dual_norm(spec: QoiSpec, problem, M: int) -> float:
    """||G||_{H^-1} of the quantity of interest."""
    if spec.kind == "mean_value":
        return riesz_norm(type(problem)(1.0, (), 1.0, problem.x_lo, problem.x_hi, psi_sup=()), M)
    if spec.kind == "point_eval" and spec.width == 0:
        a, b = problem.x_lo, problem.x_hi
        return math.sqrt((spec.x0 - a) * (b - spec.x0) / (b - a))
    return math.nan


@dataclass
class PipelineReport:
    order: int
    order_met: bool
    epsilon: float
    tail: float
    predicted_bound: float
    N: int
    lam: float
    err_l2: float
    err_linf: float
    evals: int
    test_evals: int

    def as_row(self) -> list:
        return [self.order, int(self.order_met), self.epsilon, self.tail, self.predicted_bound,
                self.N, self.lam, self.err_l2, self.err_linf, self.evals]


PIPELINE_HEADER = ["order", "order_met", "epsilon", "tail", "predicted_bound", "N", "lambda",
                   "err_l2", "err_linf", "evals"]


def run_pde_pipeline(cfg: PipelineConfig) -> PipelineReport:
    """Weights from the coefficient, order selection, sparse-grid fit and test error."""
    problem = problem_from_dict(cfg.problem)
    d = problem.d
    coer = coercivity_check(problem)
    ratios = problem.sup_norms() / coer.a_min
    eps = epsilon(cfg.c, ratios)
    if not eps.conditions_met:
        violated = []
        if not eps.max_ratio_ok:
            violated.append(f"max ratio {eps.max_ratio:.4g} > 1")
        if not eps.sum_ok:
            violated.append(f"sum of ratios^(1/(1+c)) = {eps.ratio_sum:.4g} >= {eps.sum_limit:.4g}")
        raise InputError("weights infeasible: " + "; ".join(violated))
    scheme = WeightScheme.pod(cfg.c, 0, 1, np.maximum(ratios, 1e-300))
    if cfg.order is not None:
        if not 0 <= cfg.order <= d:
            raise InputError(f"order must lie in [0, {d}]")
        order, met = int(cfg.order), True
    else:
        sel = select_order(scheme, d, cfg.tolerance, exponent=0.5)
        order, met = sel.order, sel.met
    family = order_family(d, order)
    tail = tail_sum_exact(scheme, family, 0.5)
    spec = qoi_from_config(cfg.qoi)
    norm = bochner_norm_bound(scheme, ratios, riesz_norm(problem, cfg.mesh), coer.a_min)
    predicted = qoi_dual_norm(spec, problem, cfg.mesh) * tail * norm

    box = Box.cube(d, -PARAM_HALF_WIDTH, PARAM_HALF_WIDTH)
    anchor = Anchor(np.zeros(d))
    S = sparse_sampling_set(family, anchor, box, cfg.q)
    ug = ug_function(problem, spec, cfg.mesh)
    y = ug(S.points)
    evals = ug.eval_counter
    kernel = kernel_from_config(cfg.kernel, family, anchor, box, lambda u: gamma_weight(scheme, u))
    lam = _lambda_for(cfg.lam, S, family, d)
    model = fit_plain(kernel, S.points, y, lam)
    T = test_points(d, box, dict({"seed": cfg.seed}, **cfg.test))
    err = predict(model, T) - ug(T)
    return PipelineReport(
        order, met, eps.value, tail, predicted, len(S), lam,
        float(np.sqrt(np.mean(err**2))), float(np.max(np.abs(err))), evals, ug.eval_counter - evals,
    )


def write_pipeline_csv(path, reports) -> None:
    with output_stream(path) as fh:
        fh.write("# " + json.dumps({"caveat": "predicted_bound is up to embedding constant"}) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PIPELINE_HEADER)
        for r in reports:
            w.writerow([_fmt(v) for v in r.as_row()])


MODEL_FORMAT = 1


def write_model_csv(path, model, sampling: SamplingSet | None, kernel_spec: dict, weights_spec: dict) -> None:
    """Model file: a '#' JSON line with everything needed to rebuild the kernel,
    then ``index,block,x1..xd,alpha``."""
    K = model.kernel
    d = K.d
    labels = sampling.labels if sampling is not None else [None] * model.X.shape[0]
    factors = K.factors
    meta = {
        "format": MODEL_FORMAT,
        "kernel": kernel_spec,
        "weights": weights_spec,
        "lambda": model.lam,
        "weighted": model.weighted,
        "anchor": [f.anchor for f in factors],
        "box": [[f.interval[0] for f in factors], [f.interval[1] for f in factors]],
        "family": [str(u) for u in K.family],
    }
    with output_stream(path) as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "block"] + [f"x{j + 1}" for j in range(d)] + ["alpha"])
        for i, (x, a) in enumerate(zip(model.X, model.alpha)):
            lab = "" if labels[i] is None else str(labels[i])
            w.writerow([str(i), lab] + [repr(float(v)) for v in x] + [repr(float(a))])


def read_model_csv(path):
    """Rebuild a prediction-ready model from :func:`write_model_csv` output."""
    meta, header, rows = read_csv_with_meta(path)
    if meta.get("format") != MODEL_FORMAT or header[:2] != ["index", "block"] or header[-1] != "alpha":
        raise InputError(f"{path}: not a model file")
    d = len(header) - 3
    try:
        data = np.array([[float(v) for v in r[2:]] for r in rows], dtype=float).reshape(-1, d + 1)
        family = DownwardClosedFamily.closure([parse_subset(s, d) for s in meta["family"]], d)
        anchor = Anchor(meta["anchor"])
        box = Box(meta["box"][0], meta["box"][1])
        scheme = weight_scheme_from_config(meta["weights"])
        kernel = kernel_from_config(meta["kernel"], family, anchor, box, scheme)
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: malformed model file ({exc})") from None
    return RegressionModel(kernel, data[:, :d], data[:, d], float(meta["lambda"]), bool(meta["weighted"]))


def read_values_csv(path) -> np.ndarray:
    """Last column of a CSV with a header line (e.g. ``x1..xd,ug``)."""
    _, header, rows = read_csv_with_meta(path)
    try:
        return np.array([float(r[-1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: bad value column ({exc})") from None


def read_eval_points(path) -> np.ndarray:
    """Points from a CSV with header ``block,x1..xd`` or ``x1..xd``."""
    _, header, rows = read_csv_with_meta(path)
    start = 1 if header and header[0] == "block" else 0
    cols = [i for i, h in enumerate(header) if i >= start and h.startswith("x")]
    if not cols:
        raise InputError(f"{path}: no coordinate columns x1..xd")
    try:
        return np.array([[float(r[i]) for i in cols] for r in rows], dtype=float).reshape(-1, len(cols))
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: {exc}") from None


def write_table_csv(path, header, rows, meta: dict | None = None) -> None:
    with output_stream(path) as fh:
        if meta is not None:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in r])
