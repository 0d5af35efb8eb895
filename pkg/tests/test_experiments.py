import io
import json

import numpy as np
import pytest

from anchored_approx.errors import InputError
from anchored_approx.experiments import (
    ExperimentConfig,
    PipelineConfig,
    fit_rate,
    read_model_csv,
    run_convergence,
    run_pde_pipeline,
    write_model_csv,
    write_pipeline_csv,
    write_rate_csv,
)
from anchored_approx.index_sets import order_family
from anchored_approx.kernels import make_lambda_kernel
from anchored_approx.points import Anchor, Box, uniform_sampling_set
from anchored_approx.regression import fit_weighted, predict


def small_config(**over):
    cfg = {
        "d": 2,
        "seed": 3,
        "function": {"name": "genz-oscillatory"},
        "family": {"order": 2},
        "points": {"scheme": "uniform", "ladder": [3, 5, 9]},
        "kernel": {"kind": "anchored_h1"},
        "lambda": {"kind": "sobolev_h", "sigma": 2.0},
    }
    cfg.update(over)
    return cfg


class TestFitRate:
    def test_exact_power_laws(self):
        h = np.array([0.5, 0.25, 0.125, 0.0625])
        assert fit_rate(h, h**2).slope == pytest.approx(2.0, abs=1e-12)
        assert fit_rate(h, 3 * h**1.5).slope == pytest.approx(1.5, abs=1e-12)

    def test_noisy_synthetic(self):
        rng = np.random.default_rng(0)
        h = 4.0 ** -np.arange(1, 7)
        for p in (1.0, 2.0, 3.0):
            errs = h**p * np.exp(0.1 * rng.normal(size=h.size))
            assert abs(fit_rate(h, errs).slope - p) <= 0.2

    def test_plateau_excluded(self):
        h = 2.0 ** -np.arange(1, 8)
        errs = np.maximum(h**2, 1e-3)
        fit = fit_rate(h, errs)
        assert fit.plateau_index is not None
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert all(errs[i] > 2e-3 for i in fit.used)

    def test_too_few_rows(self):
        fit = fit_rate([0.5, 0.25], [0.1, 0.01])
        assert fit.flagged and fit.slope is None


class TestConfig:
    def test_seed_required(self):
        cfg = small_config()
        del cfg["seed"]
        with pytest.raises(InputError):
            ExperimentConfig.from_dict(cfg)

    def test_unknown_key(self):
        with pytest.raises(InputError):
            ExperimentConfig.from_dict(small_config(colour="red"))

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            ExperimentConfig.from_dict(small_config(anchor=[0, 0, 0]))

    def test_explicit_family(self):
        cfg = ExperimentConfig.from_dict(small_config(family={"members": ["{1,2}"]}))
        assert len(cfg.build_family()) == 4


class TestConvergence:
    def test_monotone_for_lambda_function(self):
        cfg = small_config(function={"name": "bump-sum"}, kernel={"kind": "pinned_matern", "nu": 2.5})
        cfg["lambda"] = {"kind": "sobolev_h", "sigma": 4.0}
        rep = run_convergence(ExperimentConfig.from_dict(cfg))
        errs = [r.err_l2 for r in rep.rows]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert [r.N for r in rep.rows] == sorted(r.N for r in rep.rows)

    def test_single_rung(self):
        rep = run_convergence(ExperimentConfig.from_dict(small_config(points={"scheme": "uniform", "ladder": [5]})))
        assert len(rep.rows) == 1 and rep.fit.flagged and rep.slope is None

    def test_sparse_ladder_budget(self):
        cfg = small_config(points={"scheme": "sparse", "ladder": [1, 2, 3]}, kernel={"kind": "pinned_matern"})
        cfg["lambda"] = {"kind": "mixed_logN", "sigma": 2.0}
        rep = run_convergence(ExperimentConfig.from_dict(cfg))
        assert rep.abscissa == "1/N"
        assert all(r.evals == r.N for r in rep.rows)

    def test_rung_context(self):
        cfg = small_config()
        cfg["lambda"] = {"kind": "sobolev_h", "sigma": 0.5}
        with pytest.raises(InputError, match="rung 3"):
            run_convergence(ExperimentConfig.from_dict(cfg))

    def test_deterministic_csv(self):
        outs = []
        for _ in range(2):
            buf = io.StringIO()
            write_rate_csv(buf, run_convergence(ExperimentConfig.from_dict(small_config())))
            outs.append(buf.getvalue())
        assert outs[0] == outs[1]


class TestPipeline:
    def test_degenerate_problem(self):
        cfg = PipelineConfig.from_dict(
            {"problem": {"d": 3, "beta": 1e-12, "theta": 2.0}, "seed": 0, "tolerance": 1e-3,
             "lambda": {"kind": "mixed_logN", "sigma": 8.0}, "test": {"size": 256}}
        )
        rep = run_pde_pipeline(cfg)
        assert rep.order == 0
        assert rep.err_linf <= 1e-8

    def test_infeasible(self):
        cfg = PipelineConfig.from_dict({"problem": {"d": 4, "beta": 0.5, "theta": 0.5}, "seed": 0})
        with pytest.raises(InputError, match="infeasible"):
            run_pde_pipeline(cfg)

    def test_bit_identical(self):
        cfg = {"problem": {"d": 3, "beta": 0.1, "theta": 2.0}, "seed": 4, "order": 1, "test": {"size": 64}}
        outs = []
        for _ in range(2):
            buf = io.StringIO()
            write_pipeline_csv(buf, [run_pde_pipeline(PipelineConfig.from_dict(cfg))])
            outs.append(buf.getvalue())
        assert outs[0] == outs[1]


class TestModelFile:
    def test_roundtrip(self, tmp_path):
        fam = order_family(2, 2)
        S = uniform_sampling_set(fam, Anchor([0.5, 0.5]), Box.cube(2), 4)
        kspec = {"kind": "pinned_matern", "nu": 1.5, "lengthscale": 0.8}
        K = make_lambda_kernel(fam, [0.5, 0.5], [0, 0], [1, 1], 2.0, **kspec)
        m = fit_weighted(K, S, np.sin(S.points.sum(axis=1)), 1e-4)
        path = tmp_path / "model.csv"
        write_model_csv(path, m, S, kspec, {"kind": "constant", "gamma": 2.0})
        back = read_model_csv(path)
        T = np.random.default_rng(0).random((20, 2))
        np.testing.assert_array_equal(predict(back, T), predict(m, T))

    def test_not_a_model(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(InputError):
            read_model_csv(path)


def test_config_json_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(small_config()))
    assert ExperimentConfig.from_json(path).d == 2
