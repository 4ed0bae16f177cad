"""Hold-out grid search, deviance scoring, warm starts."""

import numpy as np
import pytest

from twdglm.errors import ConfigError
from twdglm.family import Approx, FamilySpec, unit_deviance
from twdglm.graph import PenaltyMode, assemble_penalty, lattice_graph
from twdglm.likelihood import Coefficients, Dataset
from twdglm.links import LinkPair
from twdglm.optimizer import FitConfig, fit_ridge
from twdglm.simgen import make_dataset
from twdglm.tuning import (GridSpec, deviance_ratio, export_surface,
                           grid_search, split_train_holdout,
                           weighted_deviance)


def _cpg_instance(n=1200, seed=1, zero=0.2):
    gen = FamilySpec.compound_poisson_gamma(1.5)
    data, oracle = make_dataset(n, 3, 3, "block", gen, zero, seed=seed)
    spec = FamilySpec.compound_poisson_gamma(1.5, approx=Approx.SADDLEPOINT)
    pen = assemble_penalty(PenaltyMode.SPATIAL_ONLY, 1.0, 1.0, data.k_beta,
                           data.graph, data.k_gamma)
    cfg = FitConfig(penalty=pen, p_grid=np.array([1.5]))
    return data, oracle, spec, LinkPair.of("log", "log"), cfg


class TestWeightedDeviance:
    def test_saturated_fit_scores_zero(self):
        g = lattice_graph(1, 4)
        y = np.array([1.0, 2.0, 3.0, 4.0])
        w = np.array([1.0, 2.0, 1.0, 0.5])
        data = Dataset(y * w, w, np.arange(4), np.zeros((4, 0)),
                       np.zeros((4, 0)), g)
        spec = FamilySpec.compound_poisson_gamma(1.5)
        eta = np.log(y)     # alpha = log(y/w) reproduces each row exactly
        links = LinkPair.of("log", "log")
        assert weighted_deviance(data, eta, spec, links.mean) == \
            pytest.approx(0.0, abs=1e-12)

    def test_unit_exposure_reduces_to_unit_deviance_sum(self):
        data, oracle, spec, links, _ = _cpg_instance(n=400)
        dev = weighted_deviance(data, oracle.eta, spec, links.mean)
        mu = np.exp(data.X @ oracle.beta + oracle.alpha[data.vertex])
        assert dev == pytest.approx(
            float(np.sum(unit_deviance(spec, data.y, mu))), rel=1e-12)

    def test_linear_in_exposure(self):
        data, oracle, spec, links, _ = _cpg_instance(n=300)
        base = weighted_deviance(data, oracle.eta, spec, links.mean)
        doubled = Dataset(2.0 * data.y, 2.0 * data.w, data.vertex, data.X,
                          data.Z, data.graph)
        assert weighted_deviance(doubled, oracle.eta, spec, links.mean) == \
            pytest.approx(2.0 * base, rel=1e-12)


class TestDevianceRatio:
    def test_identity_gives_one(self):
        data, oracle, spec, links, _ = _cpg_instance(n=300, seed=5)
        assert deviance_ratio(data, oracle.eta, oracle.eta, spec,
                              links.mean) == 1.0

    def test_gross_misfit_far_above_one(self):
        data, oracle, spec, links, _ = _cpg_instance(n=300, seed=6)
        bad = oracle.eta.copy()
        bad[data.k_beta:] += 5.0
        assert deviance_ratio(data, bad, oracle.eta, spec,
                              links.mean) > 10.0


class TestSplit:
    def test_deterministic_and_disjoint(self):
        data, *_ = _cpg_instance(n=500, seed=2)
        tr1, ho1 = split_train_holdout(data, 0.6, seed=3)
        tr2, ho2 = split_train_holdout(data, 0.6, seed=3)
        np.testing.assert_array_equal(tr1, tr2)
        np.testing.assert_array_equal(ho1, ho2)
        assert len(set(tr1) & set(ho1)) == 0
        assert len(tr1) + len(ho1) == data.n_rows
        assert len(tr1) == round(0.6 * data.n_rows)


class TestGridSearch:
    def test_degenerate_grid_returns_that_cell(self):
        data, oracle, spec, links, cfg = _cpg_instance(n=600, seed=7)
        grid = GridSpec(np.array([0.3]), np.array([-0.2]), 0.6, seed=7)
        res = grid_search(data, spec, links, cfg, grid)
        assert res.best_lambda1 == pytest.approx(np.exp(0.3))
        assert res.best_lambda2 == pytest.approx(np.exp(-0.2))
        assert len(res.surface) == 1

    def test_surface_deterministic(self):
        data, oracle, spec, links, cfg = _cpg_instance(n=600, seed=8)
        grid = GridSpec(np.linspace(-2, 2, 3), np.linspace(-2, 2, 3), 0.6,
                        seed=8)
        r1 = grid_search(data, spec, links, cfg, grid)
        r2 = grid_search(data, spec, links, cfg, grid)
        d1 = [c.deviance for c in r1.surface]
        d2 = [c.deviance for c in r2.surface]
        np.testing.assert_array_equal(d1, d2)
        assert all(np.isfinite(c.deviance) for c in r1.surface
                   if not c.failed)

    def test_traversal_row_major_and_warm_start_chain(self):
        data, oracle, spec, links, cfg = _cpg_instance(n=500, seed=9)
        grid = GridSpec(np.array([-1.0, 1.0]), np.array([-1.0, 1.0]), 0.6,
                        seed=9)
        res = grid_search(data, spec, links, cfg, grid)
        coords = [(c.log_lambda1, c.log_lambda2) for c in res.surface]
        assert coords == [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0),
                          (1.0, 1.0)]
        grid_cm = GridSpec(np.array([-1.0, 1.0]), np.array([-1.0, 1.0]),
                           0.6, seed=9, row_major=False)
        res_cm = grid_search(data, spec, links, cfg, grid_cm)
        coords_cm = [(c.log_lambda1, c.log_lambda2) for c in res_cm.surface]
        assert coords_cm == [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0),
                             (1.0, 1.0)]

    def test_warm_vs_cold_on_convex_instance(self):
        rng = np.random.default_rng(12)
        g = lattice_graph(2, 3)
        n = 400
        vertex = rng.integers(0, 6, n)
        X = rng.normal(0, 1, (n, 2))
        alpha0 = rng.normal(0, 0.5, 6)
        y = X @ [0.8, -0.4] + alpha0[vertex] + rng.normal(0, 0.6, n)
        data = Dataset(y, np.ones(n), vertex, X, np.ones((n, 1)), g)
        spec = FamilySpec.normal()
        links = LinkPair.of("identity", "log")
        pen = assemble_penalty(PenaltyMode.SPATIAL_ONLY, 1.0, 1.0,
                               data.k_beta, data.graph, data.k_gamma)
        cfg = FitConfig(penalty=pen)
        grid = GridSpec(np.linspace(-2, 2, 3), np.linspace(-2, 2, 3), 0.6,
                        seed=12)
        warm = grid_search(data, spec, links, cfg, grid, warm_start=True)
        cold = grid_search(data, spec, links, cfg, grid, warm_start=False)
        f_w = warm.best_fit.objective_trace[-1]
        f_c = cold.best_fit.objective_trace[-1]
        assert abs(f_w - f_c) / abs(f_c) < 1e-6

    def test_ridge_line_is_grid_with_zero_lambda2(self):
        data, oracle, spec, links, cfg = _cpg_instance(n=600, seed=10)
        line = GridSpec(np.array([0.5]), np.array([-np.inf]), 0.6, seed=10)
        res = grid_search(data, spec, links, cfg, line)
        assert res.best_lambda2 == 0.0
        tr = data.subset(res.train_index)
        direct = fit_ridge(tr, spec, links, cfg, lambda1=float(np.exp(0.5)))
        np.testing.assert_allclose(res.best_fit.theta_hat.as_vector(),
                                   direct.theta_hat.as_vector(), atol=1e-12)

    def test_nonempty_grid_required(self):
        with pytest.raises(ConfigError):
            GridSpec(np.array([]), np.array([0.0]), 0.6, 0)


class TestSurfaceExport:
    def test_round_trip_text(self, tmp_path):
        data, oracle, spec, links, cfg = _cpg_instance(n=400, seed=11)
        grid = GridSpec(np.array([-1.0, 0.0]), np.array([0.0]), 0.6,
                        seed=11)
        res = grid_search(data, spec, links, cfg, grid)
        path = tmp_path / "surface.tsv"
        export_surface(path, res.surface)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == \
            "log_lambda1\tlog_lambda2\tholdout_deviance\tconverged"
        assert len(lines) == 3
