import json

import numpy as np
import pytest

from selfpaced.diagnostics import (
    CertificationReport,
    Check,
    certify_criticality,
    certify_descent,
    certify_equivalence,
    certify_level_set,
    certify_lsc_limit,
    certify_majorization,
    certify_trace,
)
from selfpaced.models import Dataset, Problem, losses
from selfpaced.regularizers import F_value, RegularizerSpec, v_star
from selfpaced.solvers import ErrorSchedule, InnerSolverConfig, IterateTrace, Scheme, SolverConfig, solve

GD = InnerSolverConfig("gradient_descent")


@pytest.fixture(scope="module")
def problem():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((40, 4))
    y = X @ rng.standard_normal(4) + 0.1 * rng.standard_normal(40)
    y[:8] -= 9.0
    return Problem(Dataset(X, y), "squared", 1.0, RegularizerSpec("entropic", 1.5))


@pytest.fixture(scope="module")
def traces(problem):
    w0 = np.zeros(4)
    sched = ErrorSchedule("geometric", 1e-2, 0.5)
    return {
        "aos": solve(problem, w0, SolverConfig("aos")),
        "mm": solve(problem, w0, SolverConfig("mm")),
        "inexact": solve(problem, w0, SolverConfig("inexact-mm", inner=GD, error_schedule=sched)),
    }


def constant_trace(problem, scheme=Scheme.EXACT_MM, n=4):
    tr = IterateTrace(scheme)
    for _ in range(n):
        tr.append(w=np.zeros(problem.dim), v=np.ones(problem.dataset.n_samples), G=1.0, r=0.0)
    return tr


class TestMajorization:
    def test_tangency_only(self, problem):
        anchors = list(np.random.default_rng(0).uniform(-3, 3, (20, 4)))
        chk = certify_majorization(problem, anchors, anchors)
        assert chk.passed and chk.worst_margin >= -1e-9

    def test_random_pairs(self, problem):
        rng = np.random.default_rng(1)
        chk = certify_majorization(problem, list(rng.uniform(-3, 3, (20, 4))), list(rng.uniform(-3, 3, (50, 4))))
        assert chk.passed

    def test_corrupted_surrogate_fails(self, problem):
        def half_q(prob, w, a):
            la, lw = losses(prob, a), losses(prob, w)
            reg = prob.regularizer
            return prob.phi(w) + float(np.sum(F_value(reg, la) + 0.5 * v_star(reg, la) * (lw - la)))

        # the flattened tangent undercuts G just beyond the anchor
        rng = np.random.default_rng(2)
        anchors = rng.uniform(-3, 3, (5, 4))
        probes = (anchors[:, None, :] + 0.05 * rng.standard_normal((5, 20, 4))).reshape(-1, 4)
        chk = certify_majorization(problem, list(anchors), list(probes), surrogate_fn=half_q)
        assert not chk.passed and chk.worst_margin < 0

    def test_empty(self, problem):
        with pytest.raises(ValueError):
            certify_majorization(problem, [], [np.zeros(4)])


class TestDescent:
    def test_constant_trace(self, problem):
        chk = certify_descent(constant_trace(problem))
        assert chk.passed and chk.worst_margin == 0.0

    def test_exact_trace(self, traces):
        assert certify_descent(traces["mm"]).passed
        assert certify_descent(traces["aos"]).passed

    def test_inexact_adjusted(self, traces):
        assert certify_descent(traces["inexact"], "adjusted").passed

    def test_adjusted_needs_errors(self, traces):
        with pytest.raises(ValueError):
            certify_descent(traces["mm"], "adjusted")

    def test_ascent_detected(self, problem):
        tr = constant_trace(problem)
        tr.G[2] = 1.5
        chk = certify_descent(tr)
        assert not chk.passed and chk.location == 2 and chk.worst_margin == pytest.approx(-0.5)

    def test_adjusted_tolerates_budgeted_ascent(self, problem):
        tr = constant_trace(problem, Scheme.INEXACT_MM, 3)
        tr.G = [1.0, 1.05, 1.05]
        tr.r = [0.1, 0.05, 0.05]
        assert not certify_descent(tr, "exact").passed
        assert certify_descent(tr, "adjusted").passed


class TestCriticality:
    def test_ridge_limit(self, problem):
        # huge pace: all weights ~1, so G ~ ridge objective + const
        p = problem.with_regularizer(RegularizerSpec("entropic", 1e12))
        X, y = p.dataset.features, p.dataset.targets
        w = np.linalg.solve(X.T @ X + np.eye(4), X.T @ y)
        assert certify_criticality(p, w, 1e-6).passed

    def test_random_point_fails(self, problem):
        chk = certify_criticality(problem, np.array([2.0, -1.0, 0.5, 3.0]), 1e-6)
        assert not chk.passed and chk.worst_margin < -1.0

    def test_after_solve(self, problem, traces):
        assert certify_criticality(problem, traces["aos"].w_final, 1e-6).passed

    def test_hard_is_skipped(self, problem):
        p = problem.with_regularizer(RegularizerSpec("hard", 1.0))
        chk = certify_criticality(p, np.zeros(4), 1e-6)
        assert chk.skipped
        rep = CertificationReport([chk])
        assert rep.verdict


class TestEquivalence:
    def test_identical(self, traces):
        chk = certify_equivalence(traces["aos"], traces["aos"])
        assert chk.passed and chk.worst_margin == 0.0

    def test_aos_vs_mm(self, traces):
        assert certify_equivalence(traces["aos"], traces["mm"], 1e-10).passed

    def test_aos_vs_inexact_differs(self, traces):
        chk = certify_equivalence(traces["aos"], traces["inexact"], 1e-10)
        assert not chk.passed
        assert "truncated" in chk.note


class TestLevelSet:
    def test_exact(self, problem, traces):
        assert certify_level_set(traces["mm"], problem).passed

    def test_inexact_slack(self, problem, traces):
        chk = certify_level_set(traces["inexact"], problem)
        assert chk.passed and chk.worst_margin <= traces["inexact"].eps_total + 1e-12

    def test_injected_ascent(self, problem, traces):
        tr = traces["mm"]
        bad = IterateTrace(tr.scheme, w=list(tr.w), G=list(tr.G))
        bad.G[2] = bad.G[0] + 1.0
        chk = certify_level_set(bad, problem)
        assert not chk.passed and chk.location == 2


class TestLscLimit:
    def test_converged_run(self, problem, traces):
        from selfpaced.models import implicit_objective

        tr = traces["mm"]
        assert certify_lsc_limit(tr.G, implicit_objective(problem, tr.w_final)).passed

    def test_increasing(self):
        assert not certify_lsc_limit([1.0, 2.0], 2.0).passed

    def test_constant(self):
        chk = certify_lsc_limit([3.0, 3.0, 3.0], 3.0)
        assert chk.passed and chk.worst_margin == 0.0

    def test_wrong_limit(self):
        chk = certify_lsc_limit([3.0, 2.0, 1.0], 0.5)
        assert not chk.passed and chk.location == "limit"

    def test_too_short(self):
        with pytest.raises(ValueError):
            certify_lsc_limit([1.0], 1.0)


class TestReport:
    def test_full_exact(self, problem, traces):
        rep = certify_trace(problem, traces["aos"])
        assert rep.verdict
        assert {c.name for c in rep.checks} == {"majorization", "descent_exact", "criticality", "level_set", "lsc_limit"}

    def test_full_inexact(self, problem, traces):
        rep = certify_trace(problem, traces["inexact"])
        assert rep.verdict
        assert rep["descent_exact"].informational
        assert rep["criticality"].tolerance == 1e-5

    def test_json_schema(self, problem, traces):
        d = json.loads(certify_trace(problem, traces["mm"]).to_json())
        assert set(d) == {"checks", "verdict", "assumptions"}
        assert set(d["checks"][0]) >= {"name", "passed", "worst_margin", "location"}
        assert d["verdict"] is True

    def test_failing_check_fails_verdict(self):
        rep = CertificationReport([Check("a", True, 0.0), Check("b", False, -1.0)])
        assert not rep.verdict
        assert any(line.startswith("FAIL") for line in rep.lines())
