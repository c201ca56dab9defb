import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmae.errors import EvaluationError
from mmae.evaluation import connected_components, pixel_roc_auc, pro_at_threshold, pro_auc, pro_curve
from oracles import brute_pro_auc, brute_pro_fpr, flood_fill_components, pairwise_auc, random_pro_instance


def _as_sets(comps, shape):
    return sorted(sorted(tuple(int(v) for v in np.unravel_index(c, shape)) for c in comp) for comp in comps)


def test_components_examples():
    assert connected_components(np.zeros((5, 5))) == []
    one = np.zeros((5, 5))
    one[2, 3] = 1
    comps = connected_components(one)
    assert len(comps) == 1 and comps[0].tolist() == [13]
    m = np.zeros((8, 8), np.uint8)
    m[1:3, 1:3] = 1
    m[5:7, 4:6] = 1
    comps = connected_components(m)
    assert sorted(len(c) for c in comps) == [4, 4]


def test_diagonal_pixels_join():
    m = np.eye(4, dtype=np.uint8)
    assert len(connected_components(m)) == 1


@settings(max_examples=200, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1)))
def test_components_match_flood_fill(mask):
    got = _as_sets(connected_components(mask), mask.shape)
    assert got == sorted(flood_fill_components(mask))


def test_pro_perfect_and_empty():
    g = np.zeros((8, 8), np.uint8)
    g[2:4, 2:5] = 1
    g[6, 6] = 1
    assert pro_at_threshold([g.astype(float)], [g], 0.5) == (1.0, 0.0)
    assert pro_at_threshold([np.zeros((8, 8))], [g], 0.5) == (0.0, 0.0)


def test_pro_hand_count():
    # 68 pixels: a 4-pixel region and 64 negatives
    g = np.zeros((4, 17), np.uint8)
    g[0, 0:4] = 1
    m = np.zeros((4, 17))
    m[0, 0:3] = 1.0
    m[3, 10] = m[3, 12] = 1.0
    pro, fpr = pro_at_threshold([m], [g], 0.5)
    assert pro == 0.75 and fpr == 2 / 64


def test_pro_regions_weighted_equally():
    g = np.zeros((10, 10), np.uint8)
    g[0:5, 0:5] = 1  # 25 px, fully found
    g[8, 8] = 1  # 1 px, missed
    m = g.astype(float)
    m[8, 8] = 0
    pro, _ = pro_at_threshold([m], [g], 0.5)
    assert pro == 0.5


def test_pro_errors():
    with pytest.raises(EvaluationError):
        pro_at_threshold([np.zeros((4, 4))], [np.zeros((4, 4))], 0.1)
    with pytest.raises(EvaluationError):
        pro_at_threshold([np.zeros((4, 4))], [np.ones((4, 4))], 0.1)
    with pytest.raises(EvaluationError):
        pro_at_threshold([np.zeros((4, 4))], [np.ones((4, 5))], 0.1)


def test_pro_auc_perfect_detector():
    rng = np.random.default_rng(0)
    gts = []
    for _ in range(3):
        g = np.zeros((16, 16), np.uint8)
        y, x = rng.integers(0, 12, 2)
        g[y:y + 3, x:x + 4] = 1
        gts.append(g)
    assert pro_auc([g.astype(float) for g in gts], gts) == pytest.approx(1.0, abs=1e-12)


def test_pro_auc_constant_maps_match_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        _, gts = random_pro_instance(rng)
        maps = [np.full(g.shape, 0.3) for g in gts]
        got = pro_auc(maps, gts)
        assert got == pytest.approx(brute_pro_auc(maps, gts), abs=1e-12)
        # chance level: the curve is the diagonal from (0,0) to (1,1)
        assert got == pytest.approx(0.15, abs=1e-12)


def test_pro_curve_monotone_and_bounded():
    rng = np.random.default_rng(2)
    maps, gts = random_pro_instance(rng)
    c = pro_curve(maps, gts)
    assert (np.diff(c.fpr) >= 0).all()
    assert c.fpr[0] == 0 and c.pro[0] == 0 and c.fpr[-1] == 1 and c.pro[-1] == 1
    assert ((c.pro >= 0) & (c.pro <= 1 + 1e-12)).all()


def test_pro_matches_brute_force_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        maps, gts = random_pro_instance(rng)
        t = float(rng.choice(np.concatenate([m.ravel() for m in maps])))
        got = pro_at_threshold(maps, gts, t)
        want = brute_pro_fpr(maps, gts, t)
        assert got[0] == pytest.approx(want[0], abs=1e-9) and got[1] == pytest.approx(want[1], abs=1e-9)
        assert pro_auc(maps, gts) == pytest.approx(brute_pro_auc(maps, gts), abs=1e-9)


@pytest.mark.parametrize("limit", [0.05, 0.3, 1.0])
def test_pro_auc_limits(limit):
    rng = np.random.default_rng(4)
    maps, gts = random_pro_instance(rng)
    assert pro_auc(maps, gts, limit) == pytest.approx(brute_pro_auc(maps, gts, limit), abs=1e-9)


def test_pro_auc_rejects_bad_limit():
    rng = np.random.default_rng(4)
    maps, gts = random_pro_instance(rng)
    with pytest.raises(EvaluationError):
        pro_auc(maps, gts, 0.0)


def test_pro_auc_monotone_transform_invariant():
    rng = np.random.default_rng(5)
    for _ in range(20):
        maps, gts = random_pro_instance(rng)
        a = pro_auc(maps, gts)
        assert pro_auc([np.exp(3 * m) - 7 for m in maps], gts) == pytest.approx(a, abs=1e-12)


def test_quantile_thresholds_cap():
    rng = np.random.default_rng(6)
    maps, gts = random_pro_instance(rng)
    c = pro_curve(maps, gts, max_thresholds=50)
    assert len(c.thresholds) <= 51
    assert abs(c.area() - pro_auc(maps, gts)) < 0.05


def test_pixel_auc_examples():
    g = np.array([[1, 0, 1, 0]])
    assert pixel_roc_auc([np.array([[0.9, 0.8, 0.3, 0.1]])], [g]) == 0.75
    assert pixel_roc_auc([np.array([[0.9, 0.1, 0.8, 0.2]])], [g]) == 1.0
    assert pixel_roc_auc([np.full((1, 4), 0.4)], [g]) == 0.5


def test_pixel_auc_degenerate():
    with pytest.raises(EvaluationError):
        pixel_roc_auc([np.zeros((2, 2))], [np.zeros((2, 2))])
    with pytest.raises(EvaluationError):
        pixel_roc_auc([np.zeros((2, 2))], [np.ones((2, 2))])


def test_pixel_auc_matches_pairs_and_flip():
    rng = np.random.default_rng(7)
    for _ in range(30):
        maps, gts = random_pro_instance(rng, side=6)
        s = np.concatenate([m.ravel() for m in maps])
        lab = np.concatenate([g.ravel() for g in gts])
        a = pixel_roc_auc(maps, gts)
        assert a == pytest.approx(pairwise_auc(s, lab), abs=1e-12)
        flipped = pixel_roc_auc(maps, [1 - g for g in gts])
        assert flipped == pytest.approx(1 - a, abs=1e-12)


def test_pixel_auc_matches_sklearn():
    from sklearn.metrics import roc_auc_score

    rng = np.random.default_rng(8)
    maps, gts = random_pro_instance(rng)
    s = np.concatenate([m.ravel() for m in maps])
    lab = np.concatenate([g.ravel() for g in gts])
    assert pixel_roc_auc(maps, gts) == pytest.approx(roc_auc_score(lab, s), abs=1e-12)
