import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antifragility import (
    AffineFamily,
    DipFamily,
    SystemModel,
    TabulatedFamily,
    classify_antifragility,
    compare_protocols,
    dip_rate,
    estimate_sequential_rate,
    log_rate,
    make_grid,
    perron_eigenpair,
    sequential_rate,
    sweep,
)
from antifragility.errors import AllReducible, DoseOutOfDomain, GridTooSmall, InputError, Reducible
from antifragility.rates import RateProfile, classify_second_differences
from conftest import constant_model, random_irreducible


def dip_model(a=100.0, b=1.0, d=-1.0, k=1.0, domain=(0.0, 5.0)):
    return SystemModel(DipFamily(a=a, b=b, d=d, k=k, dose_domain=domain), [1.0, 1.0], [1.0, 1.0])


def tabulated_scalar(doses, values):
    return SystemModel(TabulatedFamily(doses, [[[v]] for v in values]), [1.0], [1.0])


class TestLogRate:
    def test_scalar(self):
        assert log_rate(constant_model([[-0.25]]), 0.3) == -0.25

    def test_unit_two_type(self, dip_model):
        assert log_rate(dip_model, 1.0) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)

    def test_x0_and_c_do_not_matter(self, dip_model):
        other = SystemModel(dip_model.family, [3.0, 0.1], [0.01, 7.0])
        assert log_rate(other, 0.7) == log_rate(dip_model, 0.7)

    def test_reducible_carries_dominant(self, dip_model):
        # u = 0 makes the two-type matrix upper triangular
        with pytest.raises(Reducible) as info:
            log_rate(dip_model, 0.0)
        assert info.value.dominant == pytest.approx(1.0)

    def test_out_of_domain(self, dip_model):
        with pytest.raises(DoseOutOfDomain):
            log_rate(dip_model, 6.0)


class TestSequentialRate:
    def test_alpha_one(self, dip_model):
        assert sequential_rate(dip_model, 0.5, 2.0, 1.0) == log_rate(dip_model, 0.5)

    def test_alpha_zero(self, dip_model):
        assert sequential_rate(dip_model, 0.5, 2.0, 0.0) == log_rate(dip_model, 2.0)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.6, 1.0])
    def test_equal_doses(self, dip_model, alpha):
        assert sequential_rate(dip_model, 1.2, 1.2, alpha) == pytest.approx(log_rate(dip_model, 1.2), rel=1e-15)

    def test_two_type_mean(self, dip_model):
        expected = 0.5 * (log_rate(dip_model, 0.5) + log_rate(dip_model, 1.5))
        assert sequential_rate(dip_model, 0.5, 1.5, 0.5) == expected

    def test_alpha_out_of_range(self, dip_model):
        with pytest.raises(InputError):
            sequential_rate(dip_model, 0.5, 1.5, 1.5)

    def test_reducible(self, dip_model):
        with pytest.raises(Reducible):
            sequential_rate(dip_model, 0.0, 1.5, 0.5)

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
    def test_matches_simulation(self, dip_model, alpha):
        gap = min(perron_eigenpair(dip_model.matrix_at(u)).gap for u in (0.5, 1.5))
        est = estimate_sequential_rate(dip_model, 0.5, 1.5, alpha, 30 / gap)
        assert est == pytest.approx(sequential_rate(dip_model, 0.5, 1.5, alpha), abs=1e-3)


class TestSweep:
    def test_convex_two_type(self):
        prof = sweep(dip_model(), make_grid(0.1, 5.0, 64))
        assert prof.classification == "convex"
        assert prof.irreducible_flags.all()
        assert prof.sign_changes == []

    def test_concave_when_growth_swapped(self):
        assert sweep(dip_model(b=-1.0, d=1.0), make_grid(0.1, 5.0, 64)).classification == "concave"

    def test_linear_for_constant_family(self, rng):
        A = random_irreducible(rng, 3)
        prof = sweep(constant_model(A), make_grid(0.0, 1.0, 9))
        assert prof.classification == "linear"
        np.testing.assert_allclose(prof.rates, perron_eigenpair(A).lambda_F, rtol=0, atol=1e-14)

    def test_second_difference_layout(self):
        prof = sweep(dip_model(), make_grid(0.5, 2.5, 5))
        assert math.isnan(prof.second_differences[0]) and math.isnan(prof.second_differences[-1])
        h = 0.5
        r = prof.rates
        assert prof.second_differences[2] == pytest.approx((r[1] - 2 * r[2] + r[3]) / h**2, rel=1e-12)

    def test_second_differences_follow_closed_form_curvature(self):
        # fast exchange: rho ~ dip_rate, whose second derivative is 2k(b-d)/(k+u)^3
        prof = sweep(dip_model(a=1e4), make_grid(0.5, 4.5, 41))
        u = prof.doses[1:-1]
        np.testing.assert_allclose(prof.second_differences[1:-1], 4.0 / (1 + u) ** 3, rtol=2e-2)

    def test_reducible_dose_flagged_and_excluded(self):
        prof = sweep(dip_model(), make_grid(0.0, 2.0, 9))
        assert not prof.irreducible_flags[0]
        assert prof.irreducible_flags[1:].all()
        assert prof.rates[0] == pytest.approx(1.0)
        assert math.isnan(prof.second_differences[1])
        assert prof.classification == "convex"

    def test_mixed_reports_sign_changes(self):
        # rate is 0 on [0,1], ramps to 1 on [1,2], flat on [2,3]
        prof = sweep(tabulated_scalar([0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 1.0, 1.0]), make_grid(0.0, 3.0, 7))
        assert prof.classification == "mixed"
        assert prof.sign_changes == [(1.0, 2.0)]

    def test_grid_too_small(self, dip_model):
        with pytest.raises(GridTooSmall):
            sweep(dip_model, [0.5, 1.0, 1.5, 2.0])
        with pytest.raises(GridTooSmall):
            make_grid(0.1, 1.0, 4)

    def test_nonuniform_grid(self, dip_model):
        with pytest.raises(InputError, match="uniform"):
            sweep(dip_model, [0.5, 1.0, 1.5, 2.0, 3.0])

    def test_all_reducible(self):
        fam = AffineFamily(np.diag([-1.0, 0.5]), np.diag([0.1, -0.2]), (0.0, 1.0))
        with pytest.raises(AllReducible):
            sweep(SystemModel(fam), make_grid(0.0, 1.0, 6))

    def test_grid_outside_domain(self, dip_model):
        with pytest.raises(DoseOutOfDomain):
            sweep(dip_model, make_grid(1.0, 6.0, 6))

    def test_jensen_on_grid(self, rng):
        for _ in range(10):
            a, k = rng.uniform(0.5, 50), rng.uniform(0.5, 2)
            b, d = rng.uniform(-1, 1, 2)
            prof = sweep(dip_model(a, b, d, k), make_grid(0.1, 5.0, 33))
            r = prof.rates
            mid_gap = r[1:-1] - 0.5 * (r[:-2] + r[2:])
            if prof.classification == "convex":
                assert np.all(mid_gap <= prof.tolerance)
            if prof.classification == "concave":
                assert np.all(mid_gap >= -prof.tolerance)

    def test_export_rows(self):
        prof = sweep(dip_model(), make_grid(0.0, 2.0, 5))
        rows = list(prof.rows())
        assert len(rows) == 5
        assert rows[0][3] is False
        d = prof.to_dict()
        assert d["second_differences"][0] is None


class TestClassify:
    @pytest.mark.parametrize(
        "cls, objective, verdict",
        [
            ("convex", "reward_max", "antifragile"),
            ("convex", "cost_min", "fragile"),
            ("concave", "reward_max", "fragile"),
            ("concave", "cost_min", "antifragile"),
            ("linear", "reward_max", "neutral"),
            ("linear", "cost_min", "neutral"),
            ("mixed", "reward_max", "indeterminate"),
        ],
    )
    def test_table(self, cls, objective, verdict):
        prof = RateProfile(np.zeros(5), np.zeros(5), np.zeros(5), cls, np.ones(5, bool), 0.0)
        assert classify_antifragility(prof, objective).verdict == verdict

    def test_mixed_keeps_interval(self):
        prof = sweep(tabulated_scalar([0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 1.0, 1.0]), make_grid(0.0, 3.0, 7))
        rep = classify_antifragility(prof, "cost_min")
        assert rep.verdict == "indeterminate"
        assert rep.sign_changes == [(1.0, 2.0)]

    def test_bad_objective(self):
        prof = RateProfile(np.zeros(5), np.zeros(5), np.zeros(5), "linear", np.ones(5, bool), 0.0)
        with pytest.raises(InputError):
            classify_antifragility(prof, "maximize")

    @given(st.lists(st.floats(-1, 1), min_size=3, max_size=20), st.floats(0, 0.1))
    @settings(max_examples=200, deadline=None)
    def test_classification_predicate(self, sd, tol):
        sd = np.array(sd)
        cls = classify_second_differences(sd, tol)
        assert (cls in ("convex", "linear")) == bool(np.all(sd >= -tol))
        assert (cls in ("concave", "linear")) == bool(np.all(sd <= tol))


class TestCompare:
    def test_drug_holiday_convex(self):
        cmp = compare_protocols(dip_model(), 2.0, 0.0, 40)
        assert cmp.verdict == "pulsed_superior_for_growth"
        assert cmp.measured_log_ratio > 0
        assert cmp.total_drug_pulsed == cmp.total_drug_uniform == 40.0
        assert not cmp.irreducible["v"] and not cmp.theorem_applies
        assert cmp.relative_error <= 0.05

    def test_swap_flips_verdict(self):
        cmp = compare_protocols(dip_model(b=-1.0, d=1.0), 2.0, 0.0, 40)
        assert cmp.verdict == "uniform_superior_for_growth"
        assert cmp.measured_log_ratio < 0

    def test_irreducible_endpoints(self):
        cmp = compare_protocols(dip_model(), 3.0, 0.5, 40)
        assert cmp.theorem_applies
        assert cmp.rho_bar == pytest.approx(0.5 * (cmp.rho_u + cmp.rho_v))
        assert cmp.predicted_log_ratio == pytest.approx(40 * (cmp.rho_bar - cmp.rho_w))
        assert cmp.verdict == "pulsed_superior_for_growth"
        assert cmp.relative_error <= 0.05

    def test_linear_family_equivalent(self, rng):
        cmp = compare_protocols(constant_model(random_irreducible(rng, 3)), 1.0, 0.0, 20)
        assert cmp.verdict == "equivalent"
        assert abs(cmp.measured_log_ratio) <= 1e-9

    def test_verdict_sign_consistency(self, rng):
        for _ in range(5):
            b, d = rng.uniform(-1, 1, 2)
            cmp = compare_protocols(dip_model(a=20.0, b=b, d=d), 2.5, 0.5, 10)
            if cmp.verdict == "pulsed_superior_for_growth":
                assert cmp.measured_log_ratio > 0
            elif cmp.verdict == "uniform_superior_for_growth":
                assert cmp.measured_log_ratio < 0

    def test_equal_doses_rejected(self, dip_model):
        with pytest.raises(InputError):
            compare_protocols(dip_model, 1.0, 1.0, 5)

    @pytest.mark.parametrize("N", [0, -3, 2.5, True])
    def test_bad_horizon(self, dip_model, N):
        with pytest.raises(InputError):
            compare_protocols(dip_model, 1.0, 0.0, N)

    def test_fast_exchange_tracks_dip_rate(self):
        cmp = compare_protocols(dip_model(a=1e4), 2.0, 0.5, 5)
        assert cmp.rho_u == pytest.approx(dip_rate(1.0, -1.0, 1.0, 2.0), abs=1e-3)
