import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force_sweep, golden_network, sample_polygon
from pwlnet import dnn, errors, patch
from pwlnet.dnn import WeightId
from pwlnet.geom2d import HalfspaceSet, box_polygon, plane_polygon
from pwlnet.patch import DeltaInterval, KeyPoint, PatchSpec


def golden_spec():
    r1, r2 = HalfspaceSet.argmax_region(0, 2), HalfspaceSet.argmax_region(1, 2)
    return PatchSpec(
        [
            (plane_polygon([[0, 0], [1, 0], [0, 1]]), r2),
            (box_polygon([2, 2], [3, 3]), r1),
            (box_polygon([0, 3], [1, 4]), r1),
            (box_polygon([3, 0.5], [4, 1.5]), r1),
        ]
    )


# intervals and sweep


def test_interval_for_hand_key_point():
    # at (3, 0.5): y = (3.5 + 0.5d, -2.5 - 0.5d); y2 >= y1 iff 6 + d <= 0
    mnet = dnn.to_masking(golden_network())
    spec = PatchSpec([(box_polygon([3, 0.5], [4, 1.5]), HalfspaceSet.argmax_region(1, 2))])
    kp = KeyPoint(np.array([3.0, 0.5]), 0, (np.array([0, 1, 1], dtype=np.int8),))
    (iv,) = patch.weight_intervals(mnet, [kp], spec, WeightId(0, "weight", 1, 1))
    assert iv.lo == -math.inf
    assert iv.hi == pytest.approx(-6.0, abs=1e-12)


def test_interval_unaffected_weight():
    # x2 weight of node 1 is masked off at (3, 0.5): always or never satisfied
    mnet = dnn.to_masking(golden_network())
    spec = PatchSpec([(box_polygon([3, 0.5], [4, 1.5]), HalfspaceSet.argmax_region(0, 2))])
    kp = KeyPoint(np.array([3.0, 0.5]), 0, (np.array([0, 1, 1], dtype=np.int8),))
    (iv,) = patch.weight_intervals(mnet, [kp], spec, WeightId(0, "weight", 0, 1))
    assert iv.is_full
    spec = PatchSpec([(box_polygon([3, 0.5], [4, 1.5]), HalfspaceSet.argmax_region(1, 2))])
    (iv,) = patch.weight_intervals(mnet, [kp], spec, WeightId(0, "weight", 0, 1))
    assert iv.empty


def test_sweep_hand_example():
    best, count = patch.sweep_max([DeltaInterval(0, 2), DeltaInterval(1, 3), DeltaInterval(5, 6)])
    assert count == 2
    assert (best.lo, best.hi) == (1, 2)


def test_sweep_touching_endpoints_count_as_overlap():
    best, count = patch.sweep_max([DeltaInterval(0, 1), DeltaInterval(1, 2)])
    assert count == 2 and (best.lo, best.hi) == (1, 1)


def test_sweep_full_and_empty():
    best, count = patch.sweep_max([DeltaInterval.full(), DeltaInterval.none(), DeltaInterval(-1, -0.5)])
    assert count == 2
    assert -0.75 in best


def _interval(draw):
    kind = draw(st.sampled_from(["bounded", "left", "right", "full", "empty"]))
    a = draw(st.integers(-8, 8)) / 2
    b = draw(st.integers(-8, 8)) / 2
    lo, hi = min(a, b), max(a, b)
    return {
        "bounded": DeltaInterval(lo, hi),
        "left": DeltaInterval(-math.inf, hi),
        "right": DeltaInterval(lo, math.inf),
        "full": DeltaInterval.full(),
        "empty": DeltaInterval.none(),
    }[kind]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.composite(lambda draw: _interval(draw))(), min_size=1, max_size=50))
def test_sweep_matches_brute_force(intervals):
    best, count = patch.sweep_max(intervals)
    assert count == brute_force_sweep(intervals)
    # every point of the reported interval is stabbed that many times
    for x in (best.lo, best.hi, 0.5 * (best.lo + best.hi)):
        if math.isfinite(x):
            assert sum(x in iv for iv in intervals) == count


@pytest.mark.parametrize(
    "iv, expect",
    [(DeltaInterval(1, 3), 1.0), (DeltaInterval(-3, -1), -1.0), (DeltaInterval(-1, 2), 0.0),
     (DeltaInterval(-math.inf, -6), -6.0), (DeltaInterval(2, math.inf), 2.0), (DeltaInterval.full(), 0.0)],
)
def test_choose_delta(iv, expect):
    assert patch.choose_delta(iv) == expect


def test_choose_delta_empty():
    with pytest.raises(errors.EmptyIntervalError):
        patch.choose_delta(DeltaInterval.none())


# key points and greedy repair


def test_golden_key_points():
    mnet = dnn.to_masking(golden_network())
    kps = patch.build_key_points(mnet, golden_spec())
    assert len(kps) == 23
    assert patch.count_satisfied(mnet, kps, golden_spec()) == 19
    # the corner (3, 0.5) of the last box is a key point with mask (0, 1, 1)
    hits = [kp for kp in kps if np.allclose(kp.x, [3.0, 0.5])]
    assert hits and all(kp.masks[0].tolist() == [0, 1, 1] for kp in hits)


@pytest.mark.parametrize("layer, weight, delta", [(2, WeightId(2, "bias", 0), -1.5), (0, WeightId(0, "bias", 1), -0.75)])
def test_golden_greedy(layer, weight, delta):
    mnet = dnn.to_masking(golden_network())
    res = patch.greedy_patch(mnet, golden_spec(), mnet.weight_ids(layer))
    assert res.satisfied_history == [19, 23]
    assert res.applied == [(weight, pytest.approx(delta, abs=1e-12))]
    report = patch.verify_patch(res.network, golden_spec(), mnet)
    assert report["satisfied"] == 23 and report["all_satisfied"]


def test_greedy_history_rows():
    mnet = dnn.to_masking(golden_network())
    res = patch.greedy_patch(mnet, golden_spec(), mnet.weight_ids(2))
    assert res.history[0] == {"iteration": 0, "weight_id": "", "delta": 0.0, "satisfied": 19, "total": 23,
                              "percent": pytest.approx(100 * 19 / 23)}
    assert res.history[1]["weight_id"] == "L2:b[0]"


def _identity_net(bias0):
    return dnn.to_masking(dnn.Network([dnn.DenseLayer(np.eye(2), [bias0, 0.0])]))


def test_tie_prefers_smaller_delta():
    # y1 = x1 + 1 <= 2 on [0,2]x[0,1]: bias needs d <= -1, W[0,0] needs d <= -0.5
    mnet = _identity_net(1.0)
    spec = PatchSpec([(box_polygon([0, 0], [2, 1]), HalfspaceSet([[1.0, 0.0]], [2.0]))])
    res = patch.greedy_patch(mnet, spec, mnet.weight_ids(0))
    assert res.applied == [(WeightId(0, "weight", 0, 0), pytest.approx(-0.5))]


def test_tie_prefers_lower_weight_id():
    # on [0,1]^2 both the bias and W[0,0] need exactly d = -1
    mnet = _identity_net(2.0)
    spec = PatchSpec([(box_polygon([0, 0], [1, 1]), HalfspaceSet([[1.0, 0.0]], [2.0]))])
    res = patch.greedy_patch(mnet, spec, [WeightId(0, "bias", 0), WeightId(0, "weight", 0, 0)])
    assert res.applied == [(WeightId(0, "weight", 0, 0), pytest.approx(-1.0))]


def test_greedy_stops_without_improvement():
    mnet = _identity_net(0.0)
    # y2 <= -10 is out of reach of any first-row weight
    spec = PatchSpec([(box_polygon([0, 0], [1, 1]), HalfspaceSet([[0.0, 1.0]], [-10.0]))])
    res = patch.greedy_patch(mnet, spec, [WeightId(0, "bias", 0), WeightId(0, "weight", 0, 1)])
    assert res.applied == [] and len(res.history) == 1


def test_greedy_requires_candidates():
    mnet = _identity_net(0.0)
    spec = PatchSpec([(box_polygon([0, 0], [1, 1]), HalfspaceSet([[1.0, 0.0]], [0.0]))])
    with pytest.raises(errors.InvalidWeightIdError):
        patch.greedy_patch(mnet, spec, [])


def test_verify_patch_rejects_changed_activation():
    mnet = dnn.to_masking(golden_network())
    other = dnn.to_masking(dnn.Network([dnn.DenseLayer(np.eye(3, 2), np.zeros(3)), dnn.ReluLayer(3),
                                        dnn.DenseLayer(np.ones((2, 3)), np.zeros(2))]))
    with pytest.raises(errors.ActivationChangedError):
        patch.verify_patch(other, golden_spec(), mnet)


def test_patched_golden_satisfies_whole_polytopes():
    mnet = dnn.to_masking(golden_network())
    res = patch.greedy_patch(mnet, golden_spec(), mnet.weight_ids(0))
    rng = np.random.default_rng(1)
    for X, Y in golden_spec():
        U = sample_polygon(rng, X.vertices, 2000)
        y = dnn.eval_masking(res.network, X.embedding.embed(U))[0]
        assert Y.satisfied(y).all()


def test_spec_json_forms():
    obj = {
        "pairs": [
            {"input_polytope": {"box": [[0, 0], [1, 1]]}, "output_halfspaces": {"argmax_class": 1}},
            {"input_polytope": {"vertices": [[0, 0], [1, 0], [0, 1]]},
             "output_halfspaces": [{"a": [1.0, -1.0], "b": 0.5}]},
        ]
    }
    spec = patch.patch_spec_from_json(obj, 2)
    assert len(spec) == 2
    np.testing.assert_array_equal(spec.pairs[0][1].A, [[1.0, -1.0]])
    np.testing.assert_array_equal(spec.pairs[1][1].b, [0.5])
