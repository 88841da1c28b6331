import math

import numpy as np
import pytest

from seqkrig.criteria import (
    Criterion,
    argmax_over_candidates,
    evaluate,
    nearest_neighbor,
    phi_ei0,
    phi_ei1,
    phi_ei2,
    phi_gra,
    phi_md,
    phi_s,
    phi_var,
    score_candidates,
)
from seqkrig.design_space import DesignMatrix, latin_hypercube, mixture_discrepancy
from seqkrig.exceptions import EmptyCandidatesError
from seqkrig.kernels import KernelSpec
from seqkrig.kriging import KrigingModel, fit
from seqkrig.testbed import get_function

MODEL_CRITERIA = [c for c in Criterion if c.needs_model]


@pytest.fixture(scope="module")
def branin():
    f = get_function("f1")
    d = latin_hypercube(14, 2, 8)
    return fit(d, f.evaluate(d.points), rng_seed=0), f


def fixed_model(points, y, theta, tau2=1.0, nugget=0.0):
    return KrigingModel.from_hyperparameters(DesignMatrix(points), y, KernelSpec("gaussian", theta, nugget=nugget), tau2)


class TestParse:
    @pytest.mark.parametrize(
        "name,expected",
        [("gra", Criterion.GRADIENT), ("Gradient", Criterion.GRADIENT), ("var", Criterion.VARIANCE_BOUND),
         ("s", Criterion.MAX_VARIANCE), ("MD", Criterion.MD), ("ei1", Criterion.EI1), ("EI2", Criterion.EI2)],
    )
    def test_aliases(self, name, expected):
        assert Criterion.parse(name) is expected

    def test_unknown(self):
        with pytest.raises(ValueError):
            Criterion.parse("ucb")

    def test_only_md_is_model_free(self):
        assert [c for c in Criterion if not c.needs_model] == [Criterion.MD]


class TestNearestNeighbor:
    def test_exact_row(self):
        d = latin_hypercube(6, 2, 1)
        info = nearest_neighbor(d, np.arange(6.0), d.points[3])
        assert info.index == 3 and info.distance == 0.0 and info.f_star == 3.0

    def test_one_dim(self):
        info = nearest_neighbor(DesignMatrix([[0.0], [1.0]]), [5.0, 7.0], [0.4])
        assert info.index == 0 and info.distance == pytest.approx(0.4)

    def test_tie_takes_lowest_index(self):
        d = DesignMatrix([[0.9, 0.9], [0.25, 0.5], [0.7, 0.1], [0.0, 0.0], [0.75, 0.5]])
        info = nearest_neighbor(d, np.zeros(5), [0.5, 0.5])
        assert info.index == 1


class TestClosedForms:
    def test_phi_s_prefers_far_candidate(self):
        model = fixed_model([[0.0]], [1.0], (1.0,))
        sel = argmax_over_candidates("s", model, model.design, DesignMatrix([[0.3], [1.0]]))
        assert sel.index == 1
        assert phi_s(model, [0.3]) == model.predict_variance([0.3])

    def test_phi_md_example(self):
        cur = DesignMatrix([[0.25]])
        assert phi_md(cur, [0.75]) > phi_md(cur, [0.26])
        assert phi_md(cur, [0.75]) == pytest.approx(-mixture_discrepancy([[0.25], [0.75]]).md_squared)

    def test_phi_md_row_permutation(self):
        d = latin_hypercube(7, 3, 2)
        perm = DesignMatrix(d.points[::-1])
        assert phi_md(d, [0.5, 0.5, 0.5]) == pytest.approx(phi_md(perm, [0.5, 0.5, 0.5]), abs=1e-14)

    def test_phi_md_duplicate_raises(self):
        d = latin_hypercube(4, 2, 0)
        with pytest.raises(ValueError):
            phi_md(d, d.points[2])

    def test_phi_ei0_single_point(self):
        model = fixed_model([[0.0]], [2.0], (1.0,), tau2=1.0)
        expected = (2 * math.exp(-1) - 2) ** 2 + (1 - math.exp(-2))
        assert phi_ei0(model, [1.0]) == pytest.approx(expected, rel=1e-13)

    def test_phi_ei1_linear_function(self):
        x = np.linspace(0, 1, 6)[:, None]
        model = fit(DesignMatrix(x), 3 * x[:, 0], rng_seed=0)
        for q in (0.13, 0.48, 0.91):
            assert phi_ei1(model, [q]) - phi_s(model, [q]) < 1e-3

    def test_phi_ei2_scales_with_distance(self, branin):
        model, _ = branin
        xs = np.random.default_rng(0).random((20, 2))
        dist = np.array([nearest_neighbor(model.design, model.observations, x).distance for x in xs])
        first1 = phi_ei1(model, xs) - phi_s(model, xs)
        first2 = phi_ei2(model, xs) - phi_s(model, xs)
        np.testing.assert_allclose(first2, first1 * dist, rtol=1e-9, atol=1e-9 * model.tau_squared)

    def test_phi_gra_definition(self, branin):
        model, _ = branin
        x = np.array([0.37, 0.61])
        info = nearest_neighbor(model.design, model.observations, x)
        expected = math.sqrt(model.gradient_norm_expectation(x)) * info.distance + abs(model.predict(x) - info.f_star)
        assert phi_gra(model, x) == pytest.approx(expected, rel=1e-12)

    def test_phi_gra_constant_observations(self):
        x = np.linspace(0, 1, 10)[:, None]
        model = fixed_model(x, np.full(10, 4.0), (10.0,), tau2=None)
        for q in (0.05, 0.5, 0.97):
            info = nearest_neighbor(model.design, model.observations, [q])
            spread = abs(model.predict([q]) - 4.0)
            assert spread < 1e-2 * 4.0
            first = math.sqrt(model.gradient_norm_expectation([q])) * info.distance
            assert phi_gra(model, [q]) == pytest.approx(first + spread, rel=1e-12)

    def test_phi_var_far_field(self):
        model = fixed_model([[0.0]], [1.0], (1.0,))
        assert phi_var(model, [50.0]) == pytest.approx(1.0)
        near = 0.1
        sd = math.sqrt(1 - math.exp(-2 * near * near))
        bound = math.sqrt(2 - 4 * near * near * math.exp(-2 * near * near)) * near
        assert phi_var(model, [near]) == pytest.approx(min(sd, bound), rel=1e-12)

    def test_phi_var_is_tau_free(self, branin):
        model, _ = branin
        x = [0.2, 0.8]
        assert phi_var(model, x) <= math.sqrt(model.correlation_residual(x)) + 1e-15
        assert phi_var(model, x) < 10.0


class TestProperties:
    @pytest.mark.parametrize("criterion", MODEL_CRITERIA, ids=lambda c: c.short)
    def test_zero_at_data_and_nonnegative(self, branin, criterion):
        model, _ = branin
        at_data = evaluate(criterion, model, model.design, model.design.points)
        assert np.all(np.abs(at_data) < 1e-6 * max(1.0, model.tau_squared))
        xs = latin_hypercube(200, 2, 4).points
        assert np.all(evaluate(criterion, model, model.design, xs) >= 0)

    @pytest.mark.parametrize("criterion", [Criterion.EI1, Criterion.EI2], ids=["ei1", "ei2"])
    def test_bounded_below_by_variance(self, branin, criterion):
        model, _ = branin
        xs = latin_hypercube(100, 2, 6).points
        assert np.all(evaluate(criterion, model, model.design, xs) >= phi_s(model, xs) - 1e-12)

    def test_ei0_dominates_s(self, branin):
        model, _ = branin
        xs = latin_hypercube(100, 2, 7).points
        assert np.all(phi_ei0(model, xs) >= phi_s(model, xs))

    def test_argmax_invariant_under_monotone_map(self, branin):
        model, _ = branin
        cand = latin_hypercube(300, 2, 9).points
        for c in Criterion:
            s = score_candidates(c, model, model.design, cand)
            assert np.argmax(s) == np.argmax(2 * s + 1)

    def test_gradient_bound_covers_error(self, branin):
        model, f = branin
        xs = np.random.default_rng(12).random((1000, 2))
        err = np.abs(f.evaluate(xs) - model.predict(xs))
        assert np.mean(err <= phi_gra(model, xs)) >= 0.95

    def test_gradient_variance_below_prior(self, branin):
        model, _ = branin
        xs = np.random.default_rng(13).random((500, 2))
        assert np.all(model.gradient_variance_diagonal(xs).sum(axis=1) <= 2 * sum(model.kernel.theta) + 1e-8)


class TestArgmax:
    def test_single_candidate(self, branin):
        model, _ = branin
        sel = argmax_over_candidates("gra", model, model.design, [[0.5, 0.5]])
        assert sel.index == 0

    def test_md_without_model(self):
        cur = latin_hypercube(5, 2, 0)
        sel = argmax_over_candidates("md", None, cur, latin_hypercube(40, 2, 1))
        assert np.isfinite(sel.value)

    def test_model_required(self):
        with pytest.raises(ValueError):
            argmax_over_candidates("gra", None, latin_hypercube(5, 2, 0), latin_hypercube(10, 2, 1))

    def test_rows_in_design_skipped(self, branin):
        model, _ = branin
        cand = np.vstack([model.design.points[:3], [[0.5, 0.5]]])
        sel = argmax_over_candidates("s", model, model.design, cand)
        assert sel.index == 3
        assert np.all(np.isneginf(sel.scores[:3]))

    def test_all_in_design(self, branin):
        model, _ = branin
        with pytest.raises(EmptyCandidatesError):
            argmax_over_candidates("ei0", model, model.design, model.design.points[:4])

    def test_tie_lowest_index(self):
        cur = DesignMatrix([[0.5]])
        sel = argmax_over_candidates("md", None, cur, [[0.25], [0.75], [0.6]])
        assert sel.scores[0] == sel.scores[1]
        assert sel.index == 0

    def test_parallel_bit_identical(self, branin):
        model, _ = branin
        cand = latin_hypercube(1000, 2, 3).points
        for c in ("gra", "var", "ei2", "md"):
            serial = score_candidates(c, model, model.design, cand, jobs=1)
            parallel = score_candidates(c, model, model.design, cand, jobs=4)
            assert np.array_equal(serial, parallel)

    def test_selection_csv(self, branin):
        model, _ = branin
        cand = latin_hypercube(5, 2, 3)
        sel = argmax_over_candidates("s", model, model.design, cand)
        lines = sel.to_csv(cand).strip().splitlines()
        assert lines[0] == "x1,x2,score" and len(lines) == 6
