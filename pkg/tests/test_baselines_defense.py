import itertools

import numpy as np
import pytest

from flpoisonlab.baselines import MP_LABEL, BaselineAttacker, BaselineConfig, mp_attack, rmp_attack
from flpoisonlab.defense import KrumDefense, distance_report, krum_scores, krum_select
from flpoisonlab.errors import ConfigError, ContractViolation
from flpoisonlab.fl import GlobalModel

# --------------------------------------------------------------- baselines


def test_mp_examples():
    g = GlobalModel(np.zeros(2))
    cfg = BaselineConfig("mp")
    assert mp_attack([np.array([1.0, 0.0])], g, cfg).tolist() == [-1.0, 0.0]
    assert mp_attack([g.weights], g, cfg).tolist() == [0.0, 0.0]


def test_mp_push_is_linear_and_collinear(rng):
    g = GlobalModel(rng.standard_normal(6))
    models = [rng.standard_normal(6) for _ in range(3)]
    one = mp_attack(models, g, BaselineConfig("mp", mp_push=1.0))
    two = mp_attack(models, g, BaselineConfig("mp", mp_push=2.0))
    assert np.allclose(two - g.weights, 2 * (one - g.weights))
    # residual of (w' - w_G) after projecting onto (mean - w_G)
    u = np.mean(models, axis=0) - g.weights
    v = one - g.weights
    resid = v - (v @ u) / (u @ u) * u
    assert np.linalg.norm(resid) < 1e-10


def test_mp_rejects_empty():
    with pytest.raises(ContractViolation):
        mp_attack([], GlobalModel(np.zeros(2)), BaselineConfig("mp"))


def test_rmp_zero_scale_is_identity(rng):
    g = GlobalModel(rng.standard_normal(4))
    assert np.array_equal(rmp_attack(g, BaselineConfig(rmp_scale=0.0), rng), g.weights)


def test_rmp_expected_squared_distance():
    g = GlobalModel(np.zeros(100))
    cfg = BaselineConfig(rmp_scale=3.0)
    rng = np.random.default_rng(0)
    sq = [np.sum((rmp_attack(g, cfg, rng) - g.weights) ** 2) for _ in range(1000)]
    assert np.mean(sq) == pytest.approx(9.0 * 100, rel=0.05)


def test_rmp_distance_linear_in_scale():
    g = GlobalModel(np.zeros(100))
    scales = np.array([0.5, 1, 2, 4, 8])
    means = [np.mean([np.linalg.norm(rmp_attack(g, BaselineConfig(rmp_scale=s), np.random.default_rng(k)))
                      for k in range(200)]) for s in scales]
    slope = np.polyfit(scales, means, 1)[0]
    # E|n| for n ~ N(0, I_100) is ~ 9.975
    assert slope == pytest.approx(9.975, rel=0.05)


def test_baseline_attacker_deterministic_and_labelled():
    g = GlobalModel(np.zeros(5))
    a = BaselineAttacker(1, seed=2)
    w1, d1 = a.craft([], [], g, 3)
    w2, _ = BaselineAttacker(1, seed=2).craft([], [], g, 3)
    assert np.array_equal(w1, w2) and d1["kind"] == "rmp"
    _, d = BaselineAttacker(0, cfg=BaselineConfig("mp")).craft([np.ones(5)], [1], g, 1)
    assert d["kind"] == MP_LABEL == "mp-surrogate"


def test_baseline_config_validation():
    with pytest.raises(ConfigError):
        BaselineConfig("gauss")
    with pytest.raises(ConfigError):
        BaselineConfig(rmp_scale=-1)


# ----------------------------------------------------------------- defense


def test_distance_report_hand_values():
    g = GlobalModel(np.array([1.0, 1.0]), round=2)
    models = [np.array([1.0, 1.0]), np.array([4.0, 5.0]), np.array([1.0, 0.0])]
    r = distance_report(models, g)
    assert r.round == 3
    assert [r.per_model_distance[i] for i in range(3)] == pytest.approx([0.0, 5.0, 1.0], abs=1e-12)


def test_distance_report_symmetric_models():
    g = GlobalModel(np.array([0.5, -1.0]))
    d = np.array([0.3, 0.7])
    r = distance_report([g.weights + d, g.weights - d], g)
    assert r.per_model_distance[0] == pytest.approx(r.per_model_distance[1])


def brute_force_krum(models, f):
    n = len(models)
    scores = []
    for i in range(n):
        d = sorted(float(np.sum((models[i] - models[j]) ** 2)) for j in range(n) if j != i)
        scores.append(sum(d[: n - f - 2]))
    return np.array(scores)


def test_krum_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(200):
        f = int(rng.integers(0, 3))
        n = int(rng.integers(2 * f + 3, 2 * f + 8))
        models = [rng.standard_normal(5) * rng.uniform(0.1, 3) for _ in range(n)]
        assert np.allclose(krum_scores(models, f), brute_force_krum(models, f), rtol=1e-9, atol=1e-9)


def test_krum_outlier_never_selected():
    models = [np.zeros(3)] * 4 + [np.full(3, 10.0)]
    for m in range(1, 5):
        sel, _ = krum_select(models, 1, m)
        assert 4 not in sel


def test_krum_identical_models_tie_to_lowest_id():
    sel, scores = krum_select([np.ones(2)] * 5, 1)
    assert sel == [0] and np.all(scores == 0)


def test_krum_permutation_equivariant(rng):
    models = [rng.standard_normal(4) for _ in range(7)]
    base = krum_scores(models, 1)
    for perm in itertools.islice(itertools.permutations(range(7)), 0, 50, 7):
        assert np.allclose(krum_scores([models[i] for i in perm], 1), base[list(perm)])


def test_krum_bound_error_names_bound():
    with pytest.raises(ConfigError, match="bound=5"):
        krum_scores([np.zeros(2)] * 4, 1)


def test_krum_defense_flags_far_model():
    benign = [np.full(3, 0.01 * i) for i in range(5)]
    far = [np.full(3, 50.0), np.full(3, -50.0)]
    keep_b, keep_m, report = KrumDefense(2, "multi_krum").inspect(benign, far, GlobalModel(np.zeros(3)), 1)
    assert report.flagged == {5, 6}
    assert keep_b.tolist() == [1] * 5 and keep_m.tolist() == [0, 0]


def test_krum_defense_observe_keeps_everything():
    models = [np.full(2, float(i)) for i in range(6)]
    kb, km, rep = KrumDefense(1).inspect(models[:5], models[5:], GlobalModel(np.zeros(2)), 1)
    assert kb.tolist() == [1] * 5 and km.tolist() == [1]
    assert rep.filter_mode == "observe" and len(rep.krum_scores) == 6


def test_krum_defense_single_selection():
    models = [np.full(2, float(i)) for i in range(5)]
    kb, km, _ = KrumDefense(1, "krum").inspect(models, [], GlobalModel(np.zeros(2)), 1)
    assert kb.sum() == 1


def test_defense_mode_validation():
    with pytest.raises(ConfigError):
        KrumDefense(1, "median")


def test_multi_krum_benign_changes_accuracy_little(small_clients):
    from flpoisonlab.fl import Federation, FlConfig

    clients, test = small_clients
    finals = []
    for defense in (None, KrumDefense(0, "multi_krum")):
        fed = Federation(clients, test, FlConfig(attackers=0, rounds=15), seed=0)
        for _ in range(15):
            entry = fed.run_round([], defense)
        finals.append(entry.global_accuracy)
    assert abs(finals[0] - finals[1]) < 0.02
