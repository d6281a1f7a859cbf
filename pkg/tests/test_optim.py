import logging

import numpy as np
import pytest

from bdris.errors import OptimizationError, StructuralError
from bdris.kpi import siso_gain, sum_rate_interference
from bdris.loadnet import ConfigSpace, LoadCatalog, SwitchConfig, build_load_scattering
from bdris.netmodel import PortPartition, channel_mnt
from bdris.optim import (
    IdealLoadParametrization,
    cayley,
    central_difference_gradient,
    exhaustive_search,
    ideal_optimize,
    mc_unawareness_gap,
    select_best,
)
from oracles import brute_configs, eq1_direct, manual_load_matrix, random_passive


def env(rng, n_tx=1, n_rx=1, n_s=3, smax=0.9):
    n = n_tx + n_rx + n_s
    p = PortPartition(tuple(range(n_tx)), tuple(range(n_tx, n_tx + n_rx)), tuple(range(n_tx + n_rx, n)))
    return random_passive(n, rng, smax), p


# --- exhaustive search ------------------------------------------------------------


def test_single_port_three_loads_by_hand(rng):
    S, p = env(rng, n_s=1)
    cat = LoadCatalog.default()
    values = []
    for rho in cat.individual[:, 0]:
        h = S[1, 0] + S[1, 2] * rho * S[2, 0] / (1 - S[2, 2] * rho)
        values.append(abs(h) ** 2)
    res = exhaustive_search(S, p, cat, ConfigSpace(1), "siso")
    assert res.evaluations == 3
    assert res.best_value == pytest.approx(max(values), rel=1e-13)
    assert res.best_config.codes == (int(np.argmax(values)),)


def test_single_candidate_equals_oc_baseline(rng):
    S, p = env(rng, n_s=4)
    cat = LoadCatalog.flat([1.0, -1.0, 0.0], [[0, 1], [1, 0]])
    res = exhaustive_search(S, p, cat, ConfigSpace(4, (1,), False), "siso")
    assert res.evaluations == 1
    assert res.best_value == float(siso_gain(channel_mnt(S, p, np.eye(4))[0, 0]))


def test_nested_spaces_dominate(rng):
    cat = LoadCatalog.default()
    for _ in range(5):
        S, p = env(rng, 2, 2, 6)
        for kpi in ("siso", "sum_rate"):
            if kpi == "siso":
                q = PortPartition(p.tx[:1], p.rx[:1], p.ris)
            else:
                q = p
            v = {
                name: exhaustive_search(S, q, cat, ConfigSpace(6, loads, coupled), kpi).best_value
                for name, loads, coupled in [("d12", (1, 2), False), ("d123", (1, 2, 3), False),
                                             ("bd12", (1, 2), True), ("bd123", (1, 2, 3), True)]
            }
            assert v["d12"] <= v["d123"] <= v["bd123"]
            assert v["bd12"] <= v["bd123"]


@pytest.mark.parametrize("n_s", [1, 2, 3])
def test_global_optimality_certificate(rng, n_s):
    """Independent loop: hand-built S_L, textbook channel formula, Python max."""
    cat = LoadCatalog.default()
    rho = cat.individual[:, 0]
    s11, s21, s22 = cat.coupled[:, 0]
    block = [[s11, s21], [s21, s22]]
    for _ in range(3):
        S, p = env(rng, 2, 2, n_s)
        best, best_cfg = -np.inf, None
        for states in brute_configs(n_s):
            H = eq1_direct(S, p.tx, p.rx, p.ris, manual_load_matrix(states, rho, block))
            g1 = abs(H[0, 0]) ** 2 / (abs(H[0, 1]) ** 2 + 1e-10)
            g2 = abs(H[1, 1]) ** 2 / (abs(H[1, 0]) ** 2 + 1e-10)
            value = np.log2(1 + g1) + np.log2(1 + g2)
            if value > best:
                best, best_cfg = value, states
        res = exhaustive_search(S, p, cat, ConfigSpace(n_s), "sum_rate")
        assert res.best_value == pytest.approx(best, rel=1e-9)
        assert res.best_config.codes == best_cfg


def test_best_value_reevaluates(rng):
    S, p = env(rng, 2, 2, 5)
    cat = LoadCatalog.default()
    for model in ("mnt", "cascaded"):
        res = exhaustive_search(S, p, cat, ConfigSpace(5), "sum_rate", model=model)
        H = channel_mnt(S, p, build_load_scattering(res.best_config, cat).entries)
        assert abs(res.best_value - sum_rate_interference(H)) <= 1e-12 * res.best_value


def test_ties_go_to_first_configuration():
    values = np.array([1.0, 3.0, 2.0, 3.0])
    assert select_best(values, values) == 1
    assert select_best(values, values, np.array([False, False, True, True])) == 3
    assert select_best(values, values, np.array([0, 2])) == 2
    with pytest.raises(StructuralError):
        select_best(values, values, np.zeros(4, dtype=bool))


def test_tie_breaking_in_search():
    # no coupling to the RIS at all: every configuration ties, the first one wins
    S = np.zeros((5, 5))
    S[0, 1] = S[1, 0] = 0.5
    p = PortPartition((0,), (1,), (2, 3, 4))
    res = exhaustive_search(S, p, LoadCatalog.default(), ConfigSpace(3), "siso")
    assert res.best_config == SwitchConfig.uniform(3)


def test_space_size_mismatch(rng):
    S, p = env(rng, n_s=3)
    with pytest.raises(StructuralError):
        exhaustive_search(S, p, LoadCatalog.default(), ConfigSpace(4), "siso")
    with pytest.raises(StructuralError):
        exhaustive_search(S, p, LoadCatalog.default(), ConfigSpace(3), "siso", model="exact")


def test_determinism(rng):
    S, p = env(rng, 1, 1, 6)
    cat = LoadCatalog.default()
    assert exhaustive_search(S, p, cat, ConfigSpace(6), "siso") == exhaustive_search(S, p, cat, ConfigSpace(6), "siso")
    a = ideal_optimize(S, p, "siso", "diagonal", restarts=2, seed=3)
    b = ideal_optimize(S, p, "siso", "diagonal", restarts=2, seed=3)
    assert a.best_value == b.best_value
    assert np.array_equal(a.best_config.params, b.best_config.params)


# --- coupling-unaware optimization --------------------------------------------------------


def test_unaware_never_beats_aware(rng):
    cat = LoadCatalog.default()
    for _ in range(10):
        S, p = env(rng, 1, 1, 6, smax=0.95)
        aware, unaware = mc_unawareness_gap(S, p, "siso", space=ConfigSpace(6), cat=cat)
        assert unaware <= aware


def test_no_coupling_no_gap(rng):
    S, p = env(rng, 2, 2, 6)
    S = S.copy()
    S[np.ix_(p.ris, p.ris)] = 0
    aware, unaware = mc_unawareness_gap(S, p, "sum_rate", space=ConfigSpace(6), cat=LoadCatalog.default())
    assert aware == unaware


def test_strong_coupling_opens_a_gap():
    S, p = env(np.random.default_rng(0), 1, 1, 8, smax=0.7)
    assert 0.5 < np.linalg.norm(S[np.ix_(p.ris, p.ris)], 2) < 0.7
    aware, unaware = mc_unawareness_gap(S, p, "siso", space=ConfigSpace(8), cat=LoadCatalog.default())
    assert aware - unaware > 0


def test_gap_needs_a_search_route(rng):
    S, p = env(rng)
    with pytest.raises(StructuralError):
        mc_unawareness_gap(S, p, "siso")
    with pytest.raises(StructuralError):
        mc_unawareness_gap(S, p, "siso", space=ConfigSpace(3))


# --- ideal loads ------------------------------------------------------------------


def test_cayley_is_unitary_and_symmetric(rng):
    X = rng.normal(scale=100, size=(5, 5))
    X = X + X.T
    S_L = cayley(X)
    assert np.max(np.abs(S_L @ S_L.conj().T - np.eye(5))) <= 1e-12
    assert np.max(np.abs(S_L - S_L.T)) <= 1e-12


def test_parametrization_round_trip(rng):
    x = rng.uniform(-300, 300, size=6)
    P = IdealLoadParametrization(3, x)
    back = IdealLoadParametrization.from_load_scattering(P.load_scattering())
    assert np.allclose(back.params, x, rtol=1e-9, atol=1e-9)
    D = IdealLoadParametrization(3, x[:3], "diagonal")
    assert np.count_nonzero(D.reactance() - np.diag(np.diag(D.reactance()))) == 0
    with pytest.raises(StructuralError):
        IdealLoadParametrization(3, x[:4])


def test_scalar_reflection_of_reactance():
    S_L = IdealLoadParametrization(1, [50.0], "diagonal").load_scattering()
    assert S_L[0, 0] == pytest.approx((50j - 50) / (50j + 50))
    assert abs(S_L[0, 0]) == pytest.approx(1.0)


def test_central_difference_gradient():
    F = lambda xs: np.sum(xs**3, axis=1)
    x = np.array([0.5, -2.0, 3.0])
    assert np.allclose(central_difference_gradient(F, x), 3 * x**2, rtol=1e-7)


def test_single_port_diagonal_matches_grid_sweep():
    S, p = env(np.random.default_rng(7), 1, 1, 1)
    x = np.linspace(-1e4, 1e4, 2_000_001)
    rho = (1j * x - 50) / (1j * x + 50)
    h = S[1, 0] + S[1, 2] * rho * S[2, 0] / (1 - S[2, 2] * rho)
    grid_best = np.max(np.abs(h) ** 2)
    res = ideal_optimize(S, p, "siso", "diagonal", restarts=8, seed=0)
    assert abs(res.best_value - grid_best) <= 1e-4 * grid_best
    assert res.best_value >= grid_best * (1 - 1e-9)


def test_fully_connected_dominates_diagonal(rng):
    for _ in range(3):
        S, p = env(rng, 2, 2, 3)
        d = ideal_optimize(S, p, "logdet", "diagonal", restarts=8, seed=1)
        X = np.diag(d.best_config.params)
        warm = IdealLoadParametrization(3, X[np.triu_indices(3)])
        bd = ideal_optimize(S, p, "logdet", "fully_connected", restarts=8, seed=1, init=[warm])
        assert bd.best_value >= d.best_value - 1e-9


def test_fully_connected_beats_lossless_discrete(rng):
    # every catalog entry is unitary and none has eigenvalue +1, so each discrete
    # S_L is itself a point of the ideal search space
    phi = 0.7
    cat = LoadCatalog.flat([np.exp(0.4j), -1.0, np.exp(2.5j)], [[0, np.exp(1j * phi)], [np.exp(1j * phi), 0]])
    for _ in range(3):
        S, p = env(rng, 1, 1, 4)
        disc = exhaustive_search(S, p, cat, ConfigSpace(4), "siso")
        warm = IdealLoadParametrization.from_load_scattering(build_load_scattering(disc.best_config, cat).entries)
        ideal = ideal_optimize(S, p, "siso", "fully_connected", restarts=4, seed=0, init=[warm])
        assert ideal.best_value >= disc.best_value - 1e-9


def test_ideal_result_is_unitary_and_reported_under_mnt(rng):
    S, p = env(rng, 1, 1, 4, smax=0.95)
    for model in ("mnt", "cascaded"):
        res = ideal_optimize(S, p, "siso", "fully_connected", model=model, restarts=3, seed=2)
        S_L = res.best_config.load_scattering()
        assert np.max(np.abs(S_L @ S_L.conj().T - np.eye(4))) <= 1e-8
        assert np.max(np.abs(S_L - S_L.T)) <= 1e-10
        assert res.best_value == pytest.approx(float(siso_gain(channel_mnt(S, p, S_L)[0, 0])), rel=1e-12)
        assert res.model == model


def test_ideal_unaware_not_better(rng):
    S, p = env(rng, 1, 1, 3, smax=0.95)
    aware, unaware = mc_unawareness_gap(S, p, "siso", mode="diagonal", restarts=8, seed=0)
    assert unaware <= aware + 1e-9


def test_non_finite_restarts_are_discarded(rng, caplog):
    S, p = env(rng, 1, 1, 2)
    calls = {"n": 0}

    def flaky(H):
        calls["n"] += 1
        values = siso_gain(H)
        # the first restart hits a NaN at its first evaluation, the second one is fine
        return values * np.nan if calls["n"] == 1 else values

    with caplog.at_level(logging.WARNING, logger="bdris.optim"):
        res = ideal_optimize(S, p, flaky, "diagonal", restarts=2, seed=0)
    assert np.isfinite(res.best_value)
    assert any("discarded" in r.message for r in caplog.records)

    with pytest.raises(OptimizationError):
        ideal_optimize(S, p, lambda H: siso_gain(H) * np.nan, "diagonal", restarts=2)


def test_ideal_optimize_arguments(rng):
    S, p = env(rng)
    with pytest.raises(StructuralError):
        ideal_optimize(S, p, "siso", "diagonal", restarts=0)
    with pytest.raises(StructuralError):
        ideal_optimize(S, p, "siso", "blockwise")
    with pytest.raises(StructuralError):
        ideal_optimize(S, p, "siso", "diagonal", init=[IdealLoadParametrization(2, [1.0, 2.0], "diagonal")])
