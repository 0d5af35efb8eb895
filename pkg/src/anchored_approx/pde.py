"""One-dimensional elliptic model problem with an affine random coefficient.

-(a(x, y) u'(x))' = f(x) on (x_lo, x_hi), u = 0 at both ends, with
a(x, y) = abar(x) + sum_j y_j psi_j(x) and y in [-1/2, 1/2]^d. Solved by
piecewise-linear finite elements on a uniform mesh.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .decomposition import BlackBoxFunction
from .errors import CoercivityError, InputError, NumericalError, StepError
from .index_sets import SubsetMask

PARAM_HALF_WIDTH = 0.5
GALERKIN_TOL = 1e-10
DEFAULT_MESH = 200
DEFAULT_COERCIVITY_GRID = 2001


def _as_function(value) -> Callable:
    if callable(value):
        return value
    v = float(value)
    return lambda x: np.full(np.shape(x), v)


@dataclass(frozen=True, eq=False)
class DiffusionProblem:
    """Data of the parametric problem.

    ``psi_sup`` optionally holds the exact sup-norms of the psi_j; otherwise
    they are estimated on a fine grid.
    """

    abar: Callable
    psi: tuple
    rhs: Callable
    x_lo: float = 0.0
    x_hi: float = 1.0
    psi_sup: tuple | None = None
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise InputError("spatial interval must satisfy x_lo < x_hi")
        object.__setattr__(self, "abar", _as_function(self.abar))
        object.__setattr__(self, "rhs", _as_function(self.rhs))
        object.__setattr__(self, "psi", tuple(_as_function(p) for p in self.psi))
        if self.psi_sup is not None and len(self.psi_sup) != len(self.psi):
            raise InputError("need one sup-norm per psi")

    @property
    def d(self) -> int:
        return len(self.psi)

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    def coefficient(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size != self.d:
            raise InputError(f"parameter has {y.size} entries, expected {self.d}")
        a = np.asarray(self.abar(x), dtype=float).copy()
        for yj, p in zip(y, self.psi):
            if yj != 0.0:
                a += yj * np.asarray(p(x), dtype=float)
        return a

    def sup_norms(self, resolution: int = 20001) -> np.ndarray:
        if self.psi_sup is not None:
            return np.asarray(self.psi_sup, dtype=float)
        x = np.linspace(self.x_lo, self.x_hi, resolution)
        return np.array([np.max(np.abs(p(x))) for p in self.psi])


def default_problem(d: int, beta: float, theta: float, abar: float = 1.0, f=1.0) -> DiffusionProblem:
    """psi_j(x) = beta j^(-theta) sin(j pi x) on (0, 1)."""
    if d < 1:
        raise InputError("need at least one parameter")
    psi = []
    for j in range(1, d + 1):
        amp = beta * j ** (-theta)
        psi.append(lambda x, amp=amp, j=j: amp * np.sin(j * np.pi * np.asarray(x)))
    sup = tuple(abs(beta) * j ** (-theta) for j in range(1, d + 1))
    desc = {"d": d, "beta": beta, "theta": theta, "abar": abar, "f": f}
    return DiffusionProblem(abar, tuple(psi), f, psi_sup=sup, description=desc)


def _rhs_from_spec(spec):
    if spec == "sin":
        return lambda x: np.pi**2 * np.sin(np.pi * np.asarray(x))
    if isinstance(spec, (int, float)):
        return float(spec)
    raise InputError(f"unsupported load {spec!r}; use a number or 'sin'")


def problem_from_dict(cfg: dict) -> DiffusionProblem:
    """Build a problem from a JSON-style dict.

    Keys: ``d``, ``beta``, ``theta`` (default sine family) or ``psi`` (list
    of constants), ``abar`` (number), ``f`` (number or ``'sin'``).
    """
    try:
        abar = float(cfg.get("abar", 1.0))
        f = _rhs_from_spec(cfg.get("f", 1.0))
        if "psi" in cfg:
            consts = [float(v) for v in cfg["psi"]]
            desc = {"psi": consts, "abar": abar, "f": cfg.get("f", 1.0)}
            return DiffusionProblem(abar, tuple(consts), f, psi_sup=tuple(abs(v) for v in consts), description=desc)
        prob = default_problem(int(cfg["d"]), float(cfg.get("beta", 0.1)), float(cfg.get("theta", 2.0)), abar, 1.0)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad problem specification: {exc}") from None
    desc = dict(prob.description, f=cfg.get("f", 1.0))
    return DiffusionProblem(prob.abar, prob.psi, f, psi_sup=prob.psi_sup, description=desc)


def load_problem(path) -> DiffusionProblem:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read problem file {path}: {exc}") from None
    return problem_from_dict(cfg.get("problem", cfg))


@dataclass
class CoercivityReport:
    a_min: float
    a_max: float
    worst_x: float
    worst_y: np.ndarray


def coercivity_check(problem: DiffusionProblem, resolution: int = DEFAULT_COERCIVITY_GRID) -> CoercivityReport:
    """Bounds of abar(x) -/+ sum_j |psi_j(x)|/2 over a spatial grid.

    The extremes over the parameter box are attained at y_j = -/+ sign(psi_j(x))/2.
    """
    x = np.linspace(problem.x_lo, problem.x_hi, resolution)
    ab = np.asarray(problem.abar(x), dtype=float)
    P = np.zeros((problem.d, x.size))
    for j, p in enumerate(problem.psi):
        P[j] = p(x)
    spread = PARAM_HALF_WIDTH * np.sum(np.abs(P), axis=0)
    lo = ab - spread
    hi = ab + spread
    i = int(np.argmin(lo))
    worst_y = -PARAM_HALF_WIDTH * np.sign(P[:, i])
    report = CoercivityReport(float(lo[i]), float(hi.max()), float(x[i]), worst_y)
    if report.a_min <= 0:
        raise CoercivityError(
            f"coefficient reaches {report.a_min:.4g} <= 0 at x={report.worst_x:.4g}, y={worst_y.tolist()}"
        )
    return report


@dataclass
class FemSolution:
    """Nodal values including the two boundary nodes (which are zero)."""

    nodes: np.ndarray
    values: np.ndarray
    y: np.ndarray
    residual: float = 0.0

    @property
    def h(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]


def _assemble(problem: DiffusionProblem, a_elem: np.ndarray, M: int):
    h = problem.length / (M + 1)
    mids = problem.x_lo + (np.arange(M + 1) + 0.5) * h
    fm = np.asarray(problem.rhs(mids), dtype=float) * np.ones(M + 1)
    diag = (a_elem[:-1] + a_elem[1:]) / h
    off = -a_elem[1:-1] / h
    b = 0.5 * h * (fm[:-1] + fm[1:])
    return diag, off, b


def _solve_tridiag(diag, off, b):
    M = diag.size
    ab = np.zeros((3, M))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return solve_banded((1, 1), ab, b, check_finite=False)


def _tridiag_matvec(diag, off, v):
    out = diag * v
    out[:-1] += off * v[1:]
    out[1:] += off * v[:-1]
    return out


def fem_solve(problem: DiffusionProblem, y, M: int = DEFAULT_MESH) -> FemSolution:
    """Piecewise-linear Galerkin solution at parameter y with M interior nodes."""
    if M < 1:
        raise InputError("need at least one interior node")
    y = np.asarray(y, dtype=float).reshape(-1)
    h = problem.length / (M + 1)
    mids = problem.x_lo + (np.arange(M + 1) + 0.5) * h
    a_elem = problem.coefficient(mids, y) * np.ones(M + 1)
    bad = np.flatnonzero(a_elem <= 0)
    if bad.size:
        raise CoercivityError(f"coefficient {a_elem[bad[0]]:.4g} <= 0 at x={mids[bad[0]]:.6g}, y={y.tolist()}")
    diag, off, b = _assemble(problem, a_elem, M)
    u = _solve_tridiag(diag, off, b)
    bnorm = np.linalg.norm(b)
    resid = float(np.linalg.norm(_tridiag_matvec(diag, off, u) - b))
    if bnorm > 0 and resid > GALERKIN_TOL * bnorm:
        raise NumericalError(f"Galerkin residual {resid:.3e} exceeds tolerance")
    nodes = problem.x_lo + np.arange(M + 2) * h
    values = np.concatenate([[0.0], u, [0.0]])
    return FemSolution(nodes, values, y, resid / bnorm if bnorm > 0 else 0.0)


def h1_seminorm(values: np.ndarray, h: float) -> float:
    """|v|_{H^1_0} of the piecewise-linear interpolant of nodal values."""
    return float(math.sqrt(np.sum(np.diff(values) ** 2) / h))


def riesz_norm(problem: DiffusionProblem, M: int = DEFAULT_MESH) -> float:
    """||F||_{H^-1} as the H^1_0 seminorm of the solution with a = 1."""
    h = problem.length / (M + 1)
    diag, off, b = _assemble(problem, np.ones(M + 1), M)
    u = _solve_tridiag(diag, off, b)
    return h1_seminorm(np.concatenate([[0.0], u, [0.0]]), h)


@dataclass(frozen=True, eq=False)
class QoiSpec:
    """``mean_value`` (integral of u), ``point_eval`` at x0 (averaged over
    [x0-width, x0+width] when width > 0) or ``weighted_integral`` with
    weight function ``weight``."""

    kind: str = "mean_value"
    x0: float = 0.5
    width: float = 0.0
    weight: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("mean_value", "point_eval", "weighted_integral"):
            raise InputError(f"unknown quantity of interest {self.kind!r}")
        if self.kind == "weighted_integral" and self.weight is None:
            raise InputError("weighted_integral needs a weight function")
        if self.width < 0:
            raise InputError("mollifier width must be non-negative")


def _integrate_pl(nodes, values, lo, hi) -> float:
    """Exact integral of the piecewise-linear interpolant over [lo, hi]."""
    xs = np.concatenate([[lo], nodes[(nodes > lo) & (nodes < hi)], [hi]])
    vs = np.interp(xs, nodes, values)
    return float(np.sum(0.5 * (vs[1:] + vs[:-1]) * np.diff(xs)))


def qoi(spec: QoiSpec, sol: FemSolution) -> float:
    nodes, vals = sol.nodes, sol.values
    if spec.kind == "mean_value":
        return float(sol.h * np.sum(vals))
    if spec.kind == "point_eval":
        if not nodes[0] <= spec.x0 <= nodes[-1]:
            raise InputError("evaluation point outside the domain")
        if spec.width == 0:
            return float(np.interp(spec.x0, nodes, vals))
        lo = max(nodes[0], spec.x0 - spec.width)
        hi = min(nodes[-1], spec.x0 + spec.width)
        return _integrate_pl(nodes, vals, lo, hi) / (2 * spec.width)
    # four-point Gauss rule per element: exact for weights of degree <= 6
    t, w = np.polynomial.legendre.leggauss(4)
    h = sol.h
    left = nodes[:-1, None]
    xq = left + 0.5 * h * (t[None, :] + 1)
    lam = 0.5 * (t + 1)
    uq = vals[:-1, None] * (1 - lam) + vals[1:, None] * lam
    wq = np.asarray(spec.weight(xq), dtype=float)
    return float(np.sum(0.5 * h * w[None, :] * wq * uq))


def ug_function(problem: DiffusionProblem, spec: QoiSpec, M: int = DEFAULT_MESH) -> BlackBoxFunction:
    """u_G as a metered black box on parameter points."""

    def evaluate(Y):
        return np.array([qoi(spec, fem_solve(problem, y, M)) for y in Y])

    return BlackBoxFunction(evaluate, problem.d, name="pde-qoi")


def sample_ug(problem: DiffusionProblem, spec: QoiSpec, points, M: int = DEFAULT_MESH) -> tuple[np.ndarray, int]:
    """u_G at each parameter point; returns the values and the solve count."""
    Y = np.atleast_2d(np.asarray(points, dtype=float))
    if Y.shape[1] != problem.d:
        raise InputError(f"points have {Y.shape[1]} coordinates, expected {problem.d}")
    if np.any(np.abs(Y) > PARAM_HALF_WIDTH + 1e-12):
        raise InputError("parameter points must lie in [-1/2, 1/2]^d")
    f = ug_function(problem, spec, M)
    vals = f(Y)
    return vals, f.eval_counter


@dataclass
class DerivativeBoundReport:
    lhs: float
    rhs: float
    slack: float = 0.05

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + self.slack)


def _mixed_fd_solution(problem, y, dims, step, M) -> np.ndarray:
    out = np.zeros(M + 2)
    for signs in product((1.0, -1.0), repeat=len(dims)):
        yy = y.copy()
        for j, s in zip(dims, signs):
            yy[j] += s * step
        out += np.prod(signs) * fem_solve(problem, yy, M).values
    return out / (2 * step) ** len(dims)


def derivative_bound_check(
    problem: DiffusionProblem,
    y,
    u: SubsetMask,
    fd_step: float = 1e-2,
    M: int = DEFAULT_MESH,
    slack: float = 0.05,
    coercivity: CoercivityReport | None = None,
    f_norm: float | None = None,
) -> DerivativeBoundReport:
    """|d^u u_h(., y)|_{H^1_0} against (||F||/a_min) #u! prod_{j in u} ||psi_j||/a_min.

    The mixed derivative uses central differences with steps h and h/2
    combined by Richardson extrapolation; a disagreement above 10% raises
    StepError.
    """
    if u.card > 3:
        raise InputError("mixed parameter derivatives are limited to order 3")
    if u.d != problem.d:
        raise InputError("subset dimension does not match the problem")
    if not fd_step > 0:
        raise InputError("finite-difference step must be positive")
    y = np.asarray(y, dtype=float).reshape(-1)
    coer = coercivity or coercivity_check(problem)
    fn = riesz_norm(problem, M) if f_norm is None else f_norm
    dims = list(u.indices)
    h = problem.length / (M + 1)
    if dims:
        d1 = _mixed_fd_solution(problem, y, dims, fd_step, M)
        d2 = _mixed_fd_solution(problem, y, dims, fd_step / 2, M)
        n1, n2 = h1_seminorm(d1, h), h1_seminorm(d2, h)
        scale = max(n1, n2)
        if scale > 1e-13 and h1_seminorm(d1 - d2, h) > 0.1 * scale:
            raise StepError(f"parameter step {fd_step:g} is dominated by round-off")
        lhs = h1_seminorm((4 * d2 - d1) / 3, h)
    else:
        lhs = h1_seminorm(fem_solve(problem, y, M).values, h)
    ratios = problem.sup_norms()[dims] / coer.a_min
    rhs = fn / coer.a_min * math.factorial(u.card) * float(np.prod(ratios))
    return DerivativeBoundReport(lhs, rhs, slack)


def psi_ratios(problem: DiffusionProblem, coercivity: CoercivityReport | None = None) -> np.ndarray:
    """||psi_j||_inf / a_min for each j."""
    coer = coercivity or coercivity_check(problem)
    return problem.sup_norms() / coer.a_min


def analytic_sine_problem() -> DiffusionProblem:
    """a = 1 and f = pi^2 sin(pi x) on (0,1): the exact solution is sin(pi x)."""
    return DiffusionProblem(1.0, (), _rhs_from_spec("sin"), psi_sup=())


def fem_nodal_error(M: int, problem: DiffusionProblem | None = None, exact: Callable | None = None) -> float:
    """Max nodal error of the FEM solution against an exact solution."""
    if problem is None:
        problem = analytic_sine_problem()
        exact = lambda x: np.sin(np.pi * x)  # noqa: E731
    sol = fem_solve(problem, np.zeros(problem.d), M)
    return float(np.max(np.abs(sol.values - exact(sol.nodes))))

