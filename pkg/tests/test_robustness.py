import math

import numpy as np
import pytest

from sam3r.errors import InfeasibleError, TargetUnreachableError
from sam3r.ipsolver import objectives_match, solve_bnb, solve_exhaustive
from sam3r.reliability import plan
from sam3r.robustness import (RobustnessParams, augment, build_robustness_model, stacking_violations,
                              validate_augmentation)

from instances import tensor_from_miss, toy_sites_catalog


def params_for(theta, sigma=0.9, R_u=1.0, cost=(5.0,), max_sets=3, max_vert=6, present=None):
    theta = np.asarray(theta, float)
    I, S, K, T = theta.shape
    return RobustnessParams(sigma, np.full(T, R_u), theta,
                            np.ones((K, T), bool) if present is None else np.asarray(present, bool),
                            tuple(f"S{i}" for i in range(I)), tuple(f"T{s}" for s in range(S)),
                            np.asarray(cost, float), np.ones(S), np.full(S, max_sets), max_vert)


def test_hand_instance_needs_two_sets():
    p = params_for(np.full((1, 1, 1, 1), 0.3))
    aug = augment({}, p)
    assert aug.n_add == {("S0", "T0"): 2}
    assert aug.add_cost == 10.0
    # n log 0.3 <= log 0.1 first holds at n = 2
    assert 1 * math.log(0.3) > math.log(0.1) >= 2 * math.log(0.3)


def test_existing_network_that_already_suffices_costs_nothing():
    p = params_for(np.full((1, 1, 1, 1), 0.3))
    aug = augment({("S0", "T0"): 2}, p)
    assert aug.n_add == {} and aug.add_cost == 0.0
    assert aug.n_total == {("S0", "T0"): 2}
    assert aug.beta == {"S0": 1}


def test_existing_counts_reduce_additions():
    p = params_for(np.full((2, 1, 1, 1), 0.3), max_sets=1)
    aug = augment({("S0", "T0"): 1}, p)
    assert aug.n_add == {("S1", "T0"): 1}


def test_tiny_sigma_needs_nothing():
    aug = augment({}, params_for(np.full((1, 1, 1, 1), 0.3), sigma=1e-9))
    assert aug.added_sets == 0


def test_report_covers_every_aircraft_step():
    present = np.array([[True, False, True], [False, False, True]])
    p = params_for(np.full((1, 1, 2, 3), 0.3), present=present)
    aug = augment({}, p)
    assert len(aug.report) == 2 * 3
    assert all(r.satisfied for r in aug.report)
    assert sum(r.present for r in aug.report) == 3


def test_deficient_plan_flagged():
    p = params_for(np.full((1, 1, 1, 1), 0.3))
    aug = augment({}, p)
    aug.n_add = {("S0", "T0"): 1}
    assert [r.satisfied for r in validate_augmentation(aug, p)] == [False]
    aug.beta = {"S0": 0}
    assert stacking_violations(aug, p)


def test_errors():
    with pytest.raises(TargetUnreachableError):
        build_robustness_model({}, params_for(np.full((1, 1, 1, 1), 0.3), sigma=0.95, R_u=0.9))
    with pytest.raises(InfeasibleError):
        build_robustness_model({}, params_for(np.ones((1, 1, 1, 1))))
    with pytest.raises(InfeasibleError):
        build_robustness_model({("S0", "T0"): 5}, params_for(np.full((1, 1, 1, 1), 0.3)))
    with pytest.raises(ValueError):
        params_for(np.full((1, 1, 1, 1), 1.5))


def test_random_models_match_oracle_and_validate():
    rng = np.random.default_rng(23)
    for _ in range(8):
        theta = np.ones((3, 2, 2, 3))
        mask = rng.random(theta.shape) < 0.6
        theta[mask] = rng.uniform(0.05, 0.8, mask.sum())
        theta[0, 0] = np.minimum(theta[0, 0], 0.5)
        p = params_for(theta, sigma=float(rng.choice([0.5, 0.8, 0.9])), cost=rng.integers(1, 9, size=2),
                       max_sets=2, max_vert=3)
        existing = {("S1", "T1"): int(rng.integers(0, 3))}
        ip = build_robustness_model(existing, p)
        oracle = solve_exhaustive(ip)
        assert objectives_match(oracle, solve_bnb(ip))
        if oracle.optimal:
            aug = augment(existing, p)
            assert all(r.satisfied for r in aug.report)
            assert not stacking_violations(aug, p)
            assert aug.add_cost == pytest.approx(oracle.objective_value)


def test_from_tensor_round_trip_with_reliability_plan():
    m = np.full((2, 1, 2, 2), 0.3)
    tensor = tensor_from_miss(m, rho_u=0.9995)
    sites, catalog = toy_sites_catalog(2, [5.0])
    base = plan(tensor, catalog, sites, 0.9)
    p = RobustnessParams.from_tensor(tensor, catalog, 0.9)
    aug = augment(base, p)
    assert all(r.satisfied for r in aug.report)
    # pooled rows: n * 2 ln 0.3 = -2.41 <= ln(1 - 0.9/0.9995) = -2.31 at n = 1;
    # per aircraft n ln 0.3 needs n = 2, so exactly one set is added
    assert sum(base.n.values()) == 1
    assert aug.added_sets == 1
    assert aug.add_cost == 5.0
