"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

import io
import math
import sys
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from anchored_approx.calculus import gauss_legendre_box, l2_norm_sq
from anchored_approx.cli import main as cli_main
from anchored_approx.decomposition import (
    BlackBoxFunction,
    anchored_component,
    annihilation_check,
    full_decomposition_sum,
)
from anchored_approx.experiments import ExperimentConfig, PipelineConfig, run_convergence, run_pde_pipeline
from anchored_approx.functions import REGISTRY, bump_sum, make_function
from anchored_approx.index_sets import SubsetMask, complement_members, order_family
from anchored_approx.kernels import gram, make_lambda_kernel
from anchored_approx.pde import (
    DiffusionProblem,
    QoiSpec,
    coercivity_check,
    default_problem,
    derivative_bound_check,
    fem_nodal_error,
    fem_solve,
    qoi,
    riesz_norm,
)
from anchored_approx.points import (
    Anchor,
    Box,
    SparseGridSpec,
    assemble_sampling_set,
    clenshaw_curtis_level,
    sparse_grid,
)
from anchored_approx.regression import fit_plain, fit_weighted, objective
from anchored_approx.weights import (
    WeightScheme,
    anchor_bound_check,
    epsilon,
    lower_bound_check,
    poincare_check,
    rho,
    tail_sum_bound,
    tail_sum_exact,
)

RESULTS: dict[int, str] = {}


def report(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {name} ({detail})"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_01_decomposition_identity():
    t0 = time.perf_counter()
    d = 5
    rng = np.random.default_rng(101)
    anchor = Anchor(rng.random(d))
    worst = 0.0
    for name in sorted(REGISTRY):
        f = make_function(name, d)
        for x in rng.random((100, d)):
            fx = float(f(x))
            worst = max(worst, abs(full_decomposition_sum(f, anchor, x) - fx) / (1 + abs(fx)))
    dt = time.perf_counter() - t0
    report(1, "anchored decomposition identity", worst <= 1e-11 and dt < 10,
           f"max scaled error {worst:.2e}, {dt:.1f}s")


def test_criterion_02_annihilation_and_vanishing_terms():
    t0 = time.perf_counter()
    d = 5
    anchor = Anchor(np.full(d, 0.4))
    box = Box.cube(d)
    worst_pin = 0.0
    for name in sorted(REGISTRY):
        rep = annihilation_check(make_function(name, d), order_family(d, d), anchor, box, 100, 7)
        worst_pin = max(worst_pin, rep.max_violation / rep.scale)
    fam = order_family(d, 2)
    f = BlackBoxFunction(bump_sum(d, fam), d)
    rng = np.random.default_rng(8)
    X = rng.random((50, d))
    worst_vanish = 0.0
    for u in complement_members(fam):
        vals = anchored_component(f, u, anchor, X[:, list(u.indices)])
        worst_vanish = max(worst_vanish, float(np.max(np.abs(vals))))
    dt = time.perf_counter() - t0
    ok = worst_pin <= 1e-12 and worst_vanish <= 1e-12 and dt < 10
    report(2, "annihilation and vanishing terms", ok,
           f"pinned {worst_pin:.1e}, outside family {worst_vanish:.1e}, {dt:.1f}s")


def two_term_config(delta: float) -> ExperimentConfig:
    half = math.pi / 2
    return ExperimentConfig.from_dict({
        "d": 6,
        "seed": 1,
        "box": [-half, half],
        "anchor": 0.0,
        "family": {"order": 2},
        "function": {"name": "bump-sum", "params": {"scale": 0.25}},
        "delta": delta,
        "points": {"scheme": "uniform", "ladder": [3, 5, 9, 17]},
        "kernel": {"kind": "pinned_matern", "nu": 2.5, "lengthscale": 3.0},
        "lambda": {"kind": "sobolev_h", "sigma": 9.0},
        "test": {"size": 1 << 14},
        "fit": "weighted",
    })


@pytest.mark.slow
def test_criterion_03_two_term_error_bound():
    t0 = time.perf_counter()
    base = run_convergence(two_term_config(0.0))
    errs = [r.err_l2 for r in base.rows]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    slope = base.slope
    ok_a = monotone and slope is not None and slope >= 1.5
    deltas = [1e-2, 1e-3, 1e-4]
    levels = [run_convergence(two_term_config(dl)).rows[-1].err_l2 for dl in deltas]
    within10 = all(dl / 10 <= lv <= 10 * dl for dl, lv in zip(deltas, levels))
    steps = [levels[i] / levels[i + 1] for i in range(2)]
    linear = all(10 / 3 <= s <= 30 for s in steps)
    dt = time.perf_counter() - t0
    ok = ok_a and within10 and linear and dt < 300
    report(3, "two-term error bound shape", ok,
           f"delta=0 slope {slope if slope is None else round(slope, 2)}, monotone {monotone}; "
           f"levels {', '.join(f'{v:.2e}' for v in levels)}; ratios {', '.join(f'{s:.2f}' for s in steps)}; {dt:.0f}s")


def test_criterion_04_solver_identities():
    rng = np.random.default_rng(4)
    fam = order_family(2, 2)
    K = make_lambda_kernel(fam, [0, 0], [0, 0], [1, 1], 1.0, "pinned_matern", nu=1.5)
    per = {fam.members[0]: [()], fam.members[1]: [[0.4]], fam.members[2]: [[0.7]], fam.members[3]: [[0.2, 0.9]]}
    S = assemble_sampling_set(fam, per, Anchor([0, 0]), Box.cube(2))
    y = rng.normal(size=4)
    diff_wi = float(np.max(np.abs(fit_weighted(K, S, y, 1e-3).alpha - fit_plain(K, S.points, y, 1e-3).alpha)))
    x0 = np.array([[0.3, 0.8]])
    g = gram(K, x0)[0, 0]
    v, lam = 1.7, 0.25
    single = abs(fit_plain(K, x0, [v], lam).alpha[0] - v / (g + lam))
    X = rng.random((30, 2))
    y = np.cos(3 * X[:, 0]) * X[:, 1]
    m = fit_plain(K, X, y, 1e-3)
    G = gram(K, X)
    J = objective(m.alpha, K, X, y, 1e-3, K=G)
    strict = all(J < objective(m.alpha + 1e-3 * rng.normal(size=30), K, X, y, 1e-3, K=G) for _ in range(10))
    ok = diff_wi <= 1e-12 and single <= 1e-14 and strict
    report(4, "weighted/plain solver identities", ok,
           f"W=I diff {diff_wi:.1e}, 1x1 diff {single:.1e}, strict minimum {strict}")


def _brute_sparse_count(n: int, q: int) -> int:
    def level(j):
        m = 1 if j == 1 else 2 ** (j - 1) + 1
        return [0.0] if m == 1 else [round(-math.cos(math.pi * i / (m - 1)), 12) + 0.0 for i in range(m)]

    pts = set()
    for idx in np.ndindex(*([q] * n)):
        i = [k + 1 for k in idx]
        if sum(i) != q:
            continue
        grid = [()]
        for j in i:
            grid = [p + (v,) for p in grid for v in level(j)]
        pts.update(grid)
    return len(pts)


def test_criterion_05_clenshaw_curtis():
    r = math.sqrt(2) / 2
    e2 = float(np.max(np.abs(clenshaw_curtis_level(2) - [-1, 0, 1])))
    e3 = float(np.max(np.abs(clenshaw_curtis_level(3) - [-1, -r, 0, r, 1])))
    nested = all(set(clenshaw_curtis_level(j)) <= set(clenshaw_curtis_level(j + 1)) for j in range(1, 9))
    counts_ok = True
    for n in (1, 2, 3):
        for q in range(n, n + 5):
            got = sparse_grid(SparseGridSpec(SubsetMask.full(n), q)).shape[0]
            counts_ok &= got == _brute_sparse_count(n, q)
    ok = e2 <= 1e-14 and e3 <= 1e-14 and nested and counts_ok
    report(5, "Clenshaw-Curtis levels and sparse grids", ok,
           f"Y2 err {e2:.1e}, Y3 err {e3:.1e}, nested {nested}, counts {counts_ok}")


def test_criterion_06_weight_machinery():
    rho_err = abs(rho(1.0) - 1 / 6)
    rng = np.random.default_rng(6)
    trials, good = 0, 0
    for c in (0.6, 0.8, 1.0):
        limit = rho(c) ** (1 / (2 * (1 + c))) / 2
        for _ in range(50):
            d = int(rng.integers(1, 9))
            alpha = rng.uniform(0.1, 1.0, d)
            alpha *= (rng.uniform(0.05, 0.95) * limit / np.sum(alpha ** (1 / (1 + c)))) ** (1 + c)
            s = WeightScheme.pod(c, int(rng.integers(0, 3)), int(rng.integers(1, 4)), alpha)
            L = int(rng.integers(0, d))
            trials += 1
            good += tail_sum_exact(s, order_family(d, L), 1.0) <= tail_sum_bound(s, L).value
    eps = epsilon(1.0, [0.01, 0.0025]).value
    ok = rho_err <= 1e-12 and good == trials and abs(eps - 0.4696) <= 1e-3
    report(6, "weight machinery", ok, f"rho(1) err {rho_err:.1e}, exact<=bound {good}/{trials}, eps {eps:.5f}")


POINCARE_FUNCS = [
    (lambda X: X[:, 0] * X[:, 1], 2),
    (lambda X: np.sin(X[:, 0]) * np.sin(X[:, 1]), 2),
    (lambda X: X[:, 0] ** 2 * X[:, 1], 2),
    (lambda X: (np.exp(X[:, 0]) - 1) * X[:, 1] ** 3, 2),
    (lambda X: np.sin(2 * X[:, 0]) * (X[:, 1] - X[:, 1] ** 2), 2),
    (lambda X: X[:, 0] * X[:, 1] + (X[:, 0] * X[:, 1]) ** 2, 2),
    (lambda X: np.log1p(X[:, 0]) * np.sin(3 * X[:, 1]), 2),
    (lambda X: X[:, 0] * X[:, 1] * X[:, 2], 3),
    (lambda X: np.sin(X[:, 0]) * X[:, 1] ** 2 * (np.exp(X[:, 2]) - 1), 3),
    (lambda X: X[:, 0] * np.sin(2 * X[:, 1]) * X[:, 2] * (1 + X[:, 0]), 3),
]


def test_criterion_07_poincare():
    g = POINCARE_FUNCS[0][0]
    nodes, w = gauss_legendre_box([0, 0], [1, 1], 64)
    norm = math.sqrt(l2_norm_sq(g(nodes), w))
    norm_ok = abs(norm - 1 / 3) <= 0.01 / 3
    checks, held, worst = 0, 0, 0.0
    for fn, k in POINCARE_FUNCS:
        q = 32 if k == 2 else 16
        for vb in range(1 << k):
            rep = poincare_check(fn, np.zeros(k), np.ones(k), SubsetMask(vb, k), q, 1e-3)
            checks += 1
            held += rep.holds
            worst = max(worst, rep.ratio / rep.constant)
    ok = norm_ok and held == checks
    report(7, "Poincare inequality", ok, f"||x1 x2|| = {norm:.6f}, {held}/{checks} hold, worst lhs/(C rhs) {worst:.3f}")


NORM_FUNCS = [
    # f, exact component map u.bits -> callable on x_u (anchor 0)
    (lambda X: 1 + X[:, 0] + X[:, 1], {0: lambda x: 1.0, 1: lambda x: x[0], 2: lambda x: x[0], 3: lambda x: 0.0}),
    (lambda X: X[:, 0] * X[:, 1], {0: lambda x: 0.0, 1: lambda x: 0.0, 2: lambda x: 0.0, 3: lambda x: x[0] * x[1]}),
    (lambda X: np.exp(X[:, 0] + X[:, 1]),
     {0: lambda x: 1.0, 1: lambda x: math.exp(x[0]) - 1, 2: lambda x: math.exp(x[0]) - 1,
      3: lambda x: (math.exp(x[0]) - 1) * (math.exp(x[1]) - 1)}),
    (lambda X: np.sin(X[:, 0]) + 2 * np.cos(X[:, 1]),
     {0: lambda x: 2.0, 1: lambda x: math.sin(x[0]), 2: lambda x: 2 * math.cos(x[0]) - 2, 3: lambda x: 0.0}),
    (lambda X: (1 + X[:, 0]) ** 2 * (1 + X[:, 1]),
     {0: lambda x: 1.0, 1: lambda x: (1 + x[0]) ** 2 - 1, 2: lambda x: x[0],
      3: lambda x: ((1 + x[0]) ** 2 - 1) * x[1]}),
]


def test_criterion_08_norm_inequalities():
    box, c = Box.cube(2), Anchor([0.0, 0.0])
    scheme = WeightScheme.constant(1.0)
    rng = np.random.default_rng(8)
    comp_err, lower_ok, anchor_ok, worst = 0.0, 0, 0, 0.0
    for fn, comps in NORM_FUNCS:
        f = BlackBoxFunction(fn, 2)
        for x in rng.random((5, 2)):
            for b, exact in comps.items():
                u = SubsetMask(b, 2)
                comp_err = max(comp_err, abs(anchored_component(f, u, c, x[list(u.indices)]) - exact(x[list(u.indices)])))
        low = lower_bound_check(f, c, scheme, box, 32, 1e-3)
        lower_ok += low.holds
        worst = max(worst, low.lhs / low.rhs)
        reps = anchor_bound_check(f, c, scheme, box, 32, 1e-3)
        anchor_ok += all(r.holds for r in reps.values())
        worst = max(worst, max(r.lhs / r.rhs for r in reps.values() if r.rhs > 0))
    n = len(NORM_FUNCS)
    ok = comp_err <= 1e-12 and lower_ok == n and anchor_ok == n
    report(8, "norm inequalities", ok,
           f"component err {comp_err:.1e}, lower bound {lower_ok}/{n}, anchor bound {anchor_ok}/{n}, worst ratio {worst:.3f}")


@pytest.mark.slow
def test_criterion_09_pde_pipeline():
    t0 = time.perf_counter()
    unit = DiffusionProblem(1.0, (), 1.0)
    q_err = abs(qoi(QoiSpec(), fem_solve(unit, [], 200)) - 1 / 12)
    Ms = np.array([25, 50, 100, 200])
    errs = [fem_nodal_error(int(M)) for M in Ms]
    slope = float(np.polyfit(np.log(1 / (Ms + 1)), np.log(errs), 1)[0])
    p = default_problem(4, 0.3, 2.0)
    coer = coercivity_check(p)
    F = riesz_norm(p)
    rng = np.random.default_rng(9)
    subsets = [u for u in order_family(4, 2) if u.card > 0]
    total, passed = 0, 0
    for y in rng.uniform(-0.5, 0.5, (20, 4)):
        for u in subsets:
            total += 1
            passed += derivative_bound_check(p, y, u, coercivity=coer, f_norm=F).passed
    pipe = []
    for order in (0, 1, 2):
        cfg = PipelineConfig.from_dict(
            {"problem": {"d": 6, "beta": 0.1, "theta": 2.0}, "seed": 0, "order": order, "c": 0.6}
        )
        pipe.append(run_pde_pipeline(cfg).err_l2)
    monotone = pipe[0] > pipe[1] > pipe[2]
    dt = time.perf_counter() - t0
    ok = q_err <= 1e-5 and 1.8 <= slope <= 2.2 and passed == total and monotone and dt < 300
    report(9, "parametric PDE pipeline", ok,
           f"qoi err {q_err:.1e}, FEM slope {slope:.3f}, derivative bound {passed}/{total}, "
           f"pipeline err {', '.join(f'{e:.2e}' for e in pipe)}, {dt:.1f}s")


def _cli_bytes(argv, path):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli_main(argv + ["--out", str(path)])
    return code, path.read_bytes()


def test_criterion_10_determinism(tmp_path):
    import json

    (tmp_path / "rates.json").write_text(json.dumps({
        "d": 3, "seed": 5, "function": {"name": "genz-oscillatory"}, "family": {"order": 2},
        "points": {"scheme": "uniform", "ladder": [3, 5]}, "test": {"size": 512},
    }))
    setup = [
        ["points", "--dim", "3", "--family-order", "2", "--m", "4"],
        ["points", "--dim", "3", "--family-order", "2", "--scheme", "sparse", "--q", "1", "--box", "-0.5", "0.5"],
    ]
    _cli_bytes(setup[0], tmp_path / "pts.csv")
    _cli_bytes(setup[1], tmp_path / "par.csv")
    _cli_bytes(["fit", "--function", "product", "--points", str(tmp_path / "pts.csv")], tmp_path / "model.csv")
    commands = {
        "decompose": ["decompose", "--function", "genz-corner-peak", "--dim", "3", "--seed", "11"],
        "points": setup[1],
        "weights": ["weights", "--alpha", "0.01,0.005,0.002", "--c", "0.8", "--order", "1", "--tol", "0.1"],
        "fit": ["fit", "--function", "product", "--points", str(tmp_path / "pts.csv"), "--seed", "2"],
        "predict": ["predict", "--model", str(tmp_path / "model.csv"), "--eval", str(tmp_path / "par.csv")],
        "rates": ["rates", "--config", str(tmp_path / "rates.json"), "--seed", "5"],
        "pde-sample": ["pde-sample", "--d", "3", "--points", str(tmp_path / "par.csv"), "--mesh", "50"],
        "pde-pipeline": ["pde-pipeline", "--d", "4", "--order", "1", "--mesh", "50", "--seed", "3"],
    }
    same = []
    for name, argv in commands.items():
        c1, b1 = _cli_bytes(argv, tmp_path / f"{name}-1.csv")
        c2, b2 = _cli_bytes(argv, tmp_path / f"{name}-2.csv")
        same.append(c1 == 0 and c2 == 0 and b1 == b2 and len(b1) > 0)
    bad = [n for n, s in zip(commands, same) if not s]
    report(10, "byte-identical CSV output", not bad, f"{sum(same)}/{len(same)} subcommands identical" + (f", differ: {bad}" if bad else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
