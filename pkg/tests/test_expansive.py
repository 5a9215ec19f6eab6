import numpy as np
import pytest

from ifsshadow import (MetricGrid, SymbolSequence, estimate_N_of_mu,
                       estimate_expansive_const, max_orbit_separation,
                       separation_time, separation_times_batch)
from ifsshadow.systems import (build_cat_ifs, build_identity_ifs,
                               build_rotation_ifs)

CAT = build_cat_ifs()
SIG0 = SymbolSequence.constant(0)
LAM_U = (3 + np.sqrt(5)) / 2
V_U = np.array([1.0, LAM_U - 2]) / np.linalg.norm([1.0, LAM_U - 2])


def unstable_pair(seed, sep=1e-3):
    x = np.random.default_rng(seed).random(2)
    return x, CAT.space.normalize(x + sep * V_U)


def test_equal_points_saturate():
    x = np.array([0.3, 0.4])
    assert separation_time(CAT, SIG0, x, x, eta=0.1, n_cap=30) is None


def test_cat_unstable_pair_separates_at_five():
    # growth lambda_u^n * 1e-3 first exceeds 0.1 at n = 5
    assert LAM_U ** 4 * 1e-3 < 0.1 < LAM_U ** 5 * 1e-3
    for seed in range(10):
        x, y = unstable_pair(seed)
        assert separation_time(CAT, SIG0, x, y, eta=0.1, n_cap=30) == 5


def test_separation_time_is_symmetric():
    x, y = unstable_pair(3)
    t_xy = separation_time(CAT, SIG0, x, y, eta=0.1, n_cap=30)
    t_yx = separation_time(CAT, SIG0, y, x, eta=0.1, n_cap=30)
    assert t_xy == t_yx


def test_identity_pairs_saturate():
    I = build_identity_ifs(2)
    assert separation_time(I, SIG0, [0.1, 0.1], [0.15, 0.1], eta=0.1,
                           n_cap=20) is None


def test_immediately_separated_pair_returns_zero():
    assert separation_time(CAT, SIG0, [0.0, 0.0], [0.4, 0.4], eta=0.1,
                           n_cap=5) == 0


def test_batch_matches_scalar():
    xs, ys = zip(*(unstable_pair(s) for s in range(6)))
    times = separation_times_batch(CAT, SIG0, np.array(xs), np.array(ys),
                                   eta=0.1, n_cap=30)
    assert np.all(times == 5)


def test_stable_direction_separates_backward():
    # contracting forward, expanding under the inverse
    v_s = np.array([1.0, (3 - np.sqrt(5)) / 2 - 2])
    v_s /= np.linalg.norm(v_s)
    x = np.array([0.62, 0.27])
    y = CAT.space.normalize(x + 1e-3 * v_s)
    t = separation_time(CAT, SIG0, x, y, eta=0.1, n_cap=30)
    assert t == 5


def test_max_orbit_separation_identity_is_initial_distance():
    I = build_identity_ifs(2)
    X = np.array([[0.1, 0.1], [0.5, 0.5]])
    Y = np.array([[0.13, 0.1], [0.5, 0.58]])
    sep = max_orbit_separation(I, SIG0, X, Y, n_cap=10)
    assert sep == pytest.approx(I.space.dist(X, Y))


# --- expansiveness constant ---------------------------------------------

def test_identity_violated_at_every_delta():
    I = build_identity_ifs(2)
    rep = estimate_expansive_const(I, SIG0, MetricGrid(I.space, 64),
                                   pair_tolerance=1e-3, n_cap=10, seed=2)
    assert rep.verdict == "violated"
    assert rep.candidate_delta is None
    assert all(v.violated for v in rep.verdicts if v.delta >= 1e-3)
    assert len(rep.violating_pairs) > 0


def test_rotation_violated_at_every_delta():
    R = build_rotation_ifs([0.1])
    rep = estimate_expansive_const(R, SIG0, MetricGrid(R.space, 256),
                                   pair_tolerance=1e-3, n_cap=10, seed=2)
    assert rep.verdict == "violated"
    assert rep.candidate_delta is None


def test_cat_candidate_constant_regression():
    rep = estimate_expansive_const(CAT, SIG0, MetricGrid(CAT.space, 64),
                                   pair_tolerance=1e-2, n_cap=30, seed=2)
    assert rep.verdict == "expansive-at-Delta"
    assert rep.candidate_delta == pytest.approx(0.4)
    assert not any(v.violated for v in rep.verdicts)


def test_delta_monotonicity_of_verdicts():
    I = build_identity_ifs(2)
    grid = MetricGrid(I.space, 32)
    rep_desc = estimate_expansive_const(I, SIG0, grid, pair_tolerance=1e-3,
                                        n_cap=5, seed=7,
                                        delta_grid=(0.3, 0.1, 0.01, 0.002))
    rep_asc = estimate_expansive_const(I, SIG0, grid, pair_tolerance=1e-3,
                                       n_cap=5, seed=7,
                                       delta_grid=(0.002, 0.01, 0.1, 0.3))
    assert rep_desc.verdicts == rep_asc.verdicts
    # once violated, every larger Delta is violated too
    flags = [v.violated for v in rep_desc.verdicts]  # descending order
    assert flags == sorted(flags, reverse=True)


def test_violation_record_structure():
    I = build_identity_ifs(2)
    rep = estimate_expansive_const(I, SIG0, MetricGrid(I.space, 32),
                                   pair_tolerance=1e-3, n_cap=5, seed=0)
    x, y, max_sep = rep.violating_pairs[0]
    assert I.space.dist(x, y) > rep.pair_tolerance
    assert max_sep <= max(v.delta for v in rep.verdicts)
    d = rep.to_dict()
    assert d["verdict"] == "violated" and d["violations"]


# --- N(mu) ----------------------------------------------------------------

def test_n_of_mu_vacuous_when_mu_exceeds_diameter():
    grid = MetricGrid(CAT.space, 16)
    assert estimate_N_of_mu(CAT, SIG0, eta=0.1, mu=1.0, grid=grid) == 1


def test_n_of_mu_cat_matches_eigenvalue_prediction():
    grid = MetricGrid(CAT.space, 64)
    N = estimate_N_of_mu(CAT, SIG0, eta=0.1, mu=1e-3, grid=grid, n_cap=30,
                         seed=1)
    # worst orientation splits mu across both eigendirections
    prediction = int(np.ceil(np.log(0.1 * np.sqrt(2) / 1e-3) / np.log(LAM_U)))
    assert prediction == 6
    assert abs(N - prediction) <= 1


def test_n_of_mu_identity_saturates():
    I = build_identity_ifs(2)
    grid = MetricGrid(I.space, 32)
    assert estimate_N_of_mu(I, SIG0, eta=0.1, mu=1e-3, grid=grid, n_cap=10) is None


def test_n_of_mu_monotone_in_mu_and_eta():
    grid = MetricGrid(CAT.space, 64)
    ns = [estimate_N_of_mu(CAT, SIG0, eta=0.1, mu=mu, grid=grid, seed=3)
          for mu in (1e-3, 1e-2, 1e-1)]
    assert ns[0] >= ns[1] >= ns[2]
    ne = [estimate_N_of_mu(CAT, SIG0, eta=eta, mu=1e-3, grid=grid, seed=3)
          for eta in (0.05, 0.1, 0.2)]
    assert ne[0] <= ne[1] <= ne[2]
