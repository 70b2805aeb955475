import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from selfpaced.regularizers import (
    DomainError,
    RegularizerKind,
    RegularizerSpec,
    UnsupportedOperation,
    F_value,
    check_sp_conditions,
    f_value,
    load_table,
    v_star,
)

CLOSED = [RegularizerKind.HARD, RegularizerKind.LINEAR, RegularizerKind.ENTROPIC]
V_GRID = np.linspace(0.0, 1.0, 100_001)


def brute_v_star(spec, l):
    obj = V_GRID * l + f_value(spec, V_GRID)
    return V_GRID[np.argmin(obj)]


def quad_F(spec, l):
    pts = [spec.lam] if 0 < spec.lam < l else None
    val, _ = integrate.quad(lambda t: v_star(spec, t), 0.0, l, points=pts, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


def spec(kind, lam=1.0):
    return RegularizerSpec(kind, lam)


lams = st.floats(min_value=1e-2, max_value=1e2)
ls = st.floats(min_value=0.0, max_value=1e3)


class TestConstruction:
    @pytest.mark.parametrize("lam", [0.0, -1.0, float("nan"), float("inf")])
    def test_rejects_bad_pace(self, lam):
        with pytest.raises(DomainError):
            RegularizerSpec("entropic", lam)

    def test_smooth_flags(self):
        assert not spec("hard").smooth
        assert spec("linear").smooth and spec("entropic").smooth

    @pytest.mark.parametrize(
        "l, v",
        [([], []), ([0.0, 0.0], [1.0, 0.5]), ([0.0, 1.0], [1.0, 1.5]), ([1.0, 0.5], [1.0, 0.0])],
    )
    def test_table_validation(self, l, v):
        with pytest.raises(ValueError):
            RegularizerSpec.tabulated(l, v)

    def test_tabulated_factory_rejects_increasing(self):
        with pytest.raises(ValueError, match="non-increasing"):
            RegularizerSpec.tabulated([0, 1, 2], [0.2, 0.5, 0.9])

    def test_load_table(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("l,v\n0,1\n1,0.5\n3,0\n")
        reg = load_table(p)
        assert reg.kind is RegularizerKind.TABULATED
        assert v_star(reg, 2.0) == pytest.approx(0.25)

    def test_load_table_bad_header(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("loss,weight\n0,1\n")
        with pytest.raises(ValueError, match="header"):
            load_table(p)


class TestFValue:
    def test_entropic_at_one(self):
        assert f_value(spec("entropic", 1.0), 1.0) == -1.0

    def test_hard_at_zero(self):
        assert f_value(spec("hard", 2.0), 0.0) == 0.0

    def test_linear_example(self):
        assert f_value(spec("linear", 2.0), 0.5) == pytest.approx(-0.75, abs=1e-15)

    def test_entropic_continuous_at_zero(self):
        reg = spec("entropic", 1.5)
        assert f_value(reg, 0.0) == 0.0
        assert f_value(reg, 1e-12) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("kind", CLOSED)
    def test_convex_grid_scan(self, kind):
        fv = f_value(spec(kind, 2.0), np.linspace(0, 1, 10_000))
        assert np.min(fv[:-2] - 2 * fv[1:-1] + fv[2:]) >= -1e-9

    @pytest.mark.parametrize("v", [-0.1, 1.1])
    def test_domain(self, v):
        with pytest.raises(DomainError):
            f_value(spec("linear"), v)

    def test_tabulated_unsupported(self):
        with pytest.raises(UnsupportedOperation):
            f_value(RegularizerSpec.tabulated([0, 1], [1, 0]), 0.5)


class TestVStar:
    def test_examples(self):
        assert v_star(spec("entropic", 1.0), 0.0) == 1.0
        assert v_star(spec("entropic", 2.0), 2.0) == pytest.approx(0.3678794, abs=1e-7)
        assert v_star(spec("hard", 0.5), 0.3) == 1.0
        assert v_star(spec("linear", 1.0), 0.25) == 0.75

    def test_examples_against_grid_oracle(self):
        assert brute_v_star(spec("hard", 0.5), 0.3) == 1.0
        assert brute_v_star(spec("linear", 1.0), 0.25) == pytest.approx(0.75, abs=1e-5)

    def test_hard_tie_includes_sample(self):
        assert v_star(spec("hard", 1.0), 1.0) == 1.0
        assert v_star(spec("hard", 1.0), np.nextafter(1.0, 2.0)) == 0.0

    def test_negative_loss(self):
        with pytest.raises(DomainError):
            v_star(spec("entropic"), -1e-3)

    def test_vectorized(self):
        out = v_star(spec("linear", 2.0), np.array([0.0, 1.0, 3.0]))
        np.testing.assert_array_equal(out, [1.0, 0.5, 0.0])

    def test_tabulated_clamps(self):
        reg = RegularizerSpec.tabulated([1.0, 2.0], [0.8, 0.2])
        assert v_star(reg, 0.0) == 0.8
        assert v_star(reg, 5.0) == 0.2

    @pytest.mark.parametrize("kind", CLOSED)
    def test_matches_grid_oracle(self, kind):
        rng = np.random.default_rng(1)
        for lam, l in zip(rng.uniform(0.05, 5, 30), rng.uniform(0, 8, 30)):
            reg = spec(kind, lam)
            assert abs(v_star(reg, l) - brute_v_star(reg, l)) <= 1e-5

    @settings(max_examples=200, deadline=None)
    @given(kind=st.sampled_from(CLOSED), lam=lams, l1=ls, l2=ls)
    def test_monotone_in_loss(self, kind, lam, l1, l2):
        reg = spec(kind, lam)
        lo, hi = sorted((l1, l2))
        a, b = v_star(reg, lo), v_star(reg, hi)
        assert 0.0 <= b <= a <= 1.0

    @settings(max_examples=200, deadline=None)
    @given(kind=st.sampled_from(CLOSED), lam1=lams, lam2=lams, l=ls)
    def test_monotone_in_pace(self, kind, lam1, lam2, l):
        lo, hi = sorted((lam1, lam2))
        assert v_star(spec(kind, lo), l) <= v_star(spec(kind, hi), l)


class TestEnvelope:
    @pytest.mark.parametrize("kind", CLOSED)
    def test_zero(self, kind):
        assert F_value(spec(kind, 0.7), 0.0) == 0.0

    def test_tabulated_zero(self):
        assert F_value(RegularizerSpec.tabulated([0, 1], [1, 0]), 0.0) == 0.0

    def test_hard_example(self):
        reg = spec("hard", 0.5)
        assert F_value(reg, 2.0) == 0.5
        assert abs(quad_F(reg, 2.0) - 0.5) <= 1e-10

    def test_entropic_example(self):
        reg = spec("entropic", 1.0)
        assert F_value(reg, 5.0) == pytest.approx(0.9932621, abs=1e-7)
        assert abs(quad_F(reg, 5.0) - (1 - math.exp(-5))) <= 1e-10

    def test_linear_plateau(self):
        assert F_value(spec("linear", 2.0), 7.0) == 1.0

    @pytest.mark.parametrize("kind", CLOSED)
    def test_matches_quadrature(self, kind):
        rng = np.random.default_rng(2)
        for lam, l in zip(rng.uniform(0.05, 5, 100), rng.uniform(0, 10, 100)):
            reg = spec(kind, lam)
            assert abs(F_value(reg, l) - quad_F(reg, l)) <= 1e-8

    def test_tabulated_matches_trapezoid(self):
        tl = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
        tv = np.array([1.0, 0.9, 0.6, 0.2, 0.0])
        reg = RegularizerSpec.tabulated(tl, tv)
        # piecewise-linear integrand: trapezoid over the knots is exact
        assert abs(F_value(reg, 4.0) - np.trapezoid(tv, tl)) <= 1e-10
        assert abs(F_value(reg, 6.0) - np.trapezoid(tv, tl)) <= 1e-10
        assert abs(F_value(reg, 0.5) - 0.475) <= 1e-10

    @pytest.mark.parametrize("kind", [RegularizerKind.LINEAR, RegularizerKind.ENTROPIC])
    def test_derivative_is_v_star(self, kind):
        reg = spec(kind, 1.3)
        h = 1e-5
        for l in np.linspace(0.05, 4.0, 40):
            if abs(l - reg.lam) < 10 * h:
                continue
            fd = (F_value(reg, l + h) - F_value(reg, l - h)) / (2 * h)
            assert abs(fd - v_star(reg, l)) <= 1e-6

    @pytest.mark.parametrize("kind", CLOSED)
    def test_concave_non_decreasing(self, kind):
        Fl = F_value(spec(kind, 1.0), np.linspace(0, 6, 601))
        assert np.all(np.diff(Fl) >= 0)
        assert np.max(Fl[:-2] - 2 * Fl[1:-1] + Fl[2:]) <= 1e-9

    def test_domain(self):
        with pytest.raises(DomainError):
            F_value(spec("hard"), -1.0)


class TestConditions:
    L = np.arange(0, 11, dtype=float)
    LAM = np.geomspace(0.1, 10, 11)

    def test_entropic_passes(self):
        rep = check_sp_conditions(spec("entropic"), self.L, self.LAM)
        assert rep.condition1 and rep.condition2 and rep.condition3
        assert rep.passed
        assert rep.worst_margins["monotone_in_l"] >= 0
        assert rep.worst_margins["monotone_in_lambda"] >= 0
        assert rep.worst_margins["convexity"] >= 0

    def test_hard_linear_f(self):
        rep = check_sp_conditions(spec("hard"), self.L, self.LAM)
        assert rep.condition1 and rep.condition2 and rep.condition3
        assert rep.worst_margins["convexity"] == pytest.approx(0.0, abs=1e-12)

    def test_increasing_table_fails_with_pair(self):
        bad = RegularizerSpec(RegularizerKind.TABULATED, 1.0, ([0.0, 1.0, 2.0], [0.1, 0.5, 0.9]))
        rep = check_sp_conditions(bad, self.L, self.LAM)
        assert rep.condition2 is False
        (a, va), (b, vb) = rep.violations["condition2"]["pair"]
        assert a < b and va < vb
        assert rep.condition1 is None and rep.condition3 is None

    def test_limit_surrogates(self):
        # grid too short to witness the large-loss limit
        rep = check_sp_conditions(spec("entropic"), [0.0, 0.1], [1.0, 2.0])
        assert rep.condition2 is False
        assert rep.worst_margins["limit_large_loss"] < 0

    @pytest.mark.parametrize("args", [([], [1.0]), ([1.0], []), ([2.0, 1.0], [1.0]), ([1.0], [0.0, 1.0])])
    def test_bad_grids(self, args):
        with pytest.raises(ValueError):
            check_sp_conditions(spec("linear"), *args)

    def test_json(self):
        rep = check_sp_conditions(spec("linear"), self.L, self.LAM)
        d = json.loads(rep.to_json())
        assert set(d) >= {"condition1", "condition2", "condition3", "worst_margins"}
