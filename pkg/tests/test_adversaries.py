import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gplb.adversaries import (AdversaryState, corrupt_sample, corruptible_count,
                              perturbation_set, robust_optimum, worst_case_value, xi_regret)
from gplb.hard_instances import build_final_point_class, build_simplified_matern_class
from gplb.kernels import Kernel, unit_grid

ROBUST = build_final_point_class(Kernel.matern(1.0, 0.2), 0.2, 0.05, 16.5, 1, eta=0.1,
                                 kappa=1.65)


@pytest.fixture
def robust():
    return ROBUST


def test_budget_spends_out_exactly():
    adv = AdversaryState(1.0)
    out = [corrupt_sample(adv, 0.2, 0.2) for _ in range(6)]
    np.testing.assert_allclose(out[:5], 0.0, atol=1e-15)
    assert out[5] == 0.2
    assert adv.spent == 1.0 and not adv.active
    assert adv.log[-1] == 0.0


def test_partial_push_when_budget_runs_short():
    adv = AdversaryState(0.05)
    assert corrupt_sample(adv, 0.2, 0.3) == pytest.approx(0.25)
    adv = AdversaryState(0.05)
    assert corrupt_sample(adv, -0.2, -0.2) == pytest.approx(-0.15)
    assert adv.remaining == 0.0


def test_noise_is_left_alone():
    adv = AdversaryState(10.0)
    assert corrupt_sample(adv, 0.1, 0.1 + 0.37) == pytest.approx(0.37)


def test_per_step_bound_and_validation():
    adv = AdversaryState.for_class(10.0, 0.05)
    assert adv.B0 == pytest.approx(0.4)
    with pytest.raises(ValueError):
        corrupt_sample(adv, 0.5, 0.5)
    with pytest.raises(ValueError):
        AdversaryState(-1.0)
    with pytest.raises(ValueError):
        AdversaryState(1.0, B0=0.0)


def test_zero_budget_never_acts():
    adv = AdversaryState(0.0)
    assert not adv.active
    assert corrupt_sample(adv, 0.3, 0.4) == 0.4


@given(st.floats(0.0, 5.0), st.lists(st.floats(-0.4, 0.4), max_size=60))
def test_spend_never_exceeds_budget(C, values):
    adv = AdversaryState(C)
    total = 0.0
    for v in values:
        y = corrupt_sample(adv, v, v)
        total += abs(v - y)
    assert adv.spent <= C + 1e-12
    assert total == pytest.approx(sum(adv.log), abs=1e-9)
    assert total <= C + 1e-9


@given(st.lists(st.floats(-0.4, 0.4), min_size=1, max_size=40))
def test_observations_are_zero_while_budget_lasts(values):
    adv = AdversaryState(1e6)
    assert all(corrupt_sample(adv, v, v) == 0.0 for v in values)


def test_corruptible_count():
    cls = build_simplified_matern_class(1.0, 0.2, 0.05, 1.7, 1, kappa=1.7)
    centre0 = cls.partition.centers()[0]
    pts = np.repeat(centre0[None, :], 30, axis=0)  # sum |f_0| = 30 * 0.1 = 3
    assert corruptible_count(cls, pts, 10.0) == 10
    assert corruptible_count(cls, pts, 3.0) == 9
    assert corruptible_count(cls, np.zeros((0, 1)), 1.0) == 10


def test_perturbation_set_contents(robust):
    f = robust.members[1]
    x = np.array([0.5])
    P = perturbation_set(f, x, 0.2, 64)
    assert np.all(np.abs(P[:, 0] - 0.5) <= 0.2 + 1e-12)
    assert any(np.allclose(p, c) for c in f.critical_points() for p in P
               if abs(c[0] - 0.5) <= 0.2)
    assert len(perturbation_set(f, x, 0.0)) == 1
    with pytest.raises(ValueError):
        perturbation_set(f, [1.2], 0.1)


@given(st.floats(0.0, 1.0), st.floats(0.01, 0.3), st.integers(0, 8))
def test_worst_case_is_below_value_and_shrinks_with_radius(x, xi, m):
    f = ROBUST.members[m]
    w_small = worst_case_value(f, [x], xi / 2)
    w_big = worst_case_value(f, [x], xi)
    assert w_small <= f.value([x]) + 1e-15
    assert w_big <= w_small + 1e-12
    assert worst_case_value(f, [x], 0.0) == f.value([x])


def test_xi_regret_of_the_plain_centre(robust):
    eps, xi = robust.eps, robust.params["xi"]
    assert xi_regret(robust.members[0], [0.5], xi) == pytest.approx(0.0, abs=1e-12)
    for f in robust.members[1:]:
        assert xi_regret(f, [0.5], xi) >= 2 * eps - 1e-9


def test_xi_regret_frozen_values(robust):
    xi = robust.params["xi"]
    f0 = robust.members[0]
    # far from the plateau the worst case is -2 eps, the optimum 0
    assert xi_regret(f0, [0.0], xi) == pytest.approx(0.1, abs=1e-12)
    best, i = robust_optimum(f0, unit_grid(101, 1), xi)
    assert best == pytest.approx(0.0, abs=1e-12)
    assert abs(unit_grid(101, 1)[i, 0] - 0.5) <= robust.params["plain_radius"] + 1e-12


def test_robust_optimum_has_zero_xi_regret(robust):
    xi = robust.params["xi"]
    grid = unit_grid(101, 1)
    for f in robust.members:
        best, i = robust_optimum(f, grid, xi)
        assert xi_regret(f, grid[i], xi, best=best) == 0.0
        assert xi_regret(f, grid[i], xi) == 0.0
