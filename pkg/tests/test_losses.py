import math

import numpy as np
import pytest

from ptmfuse import tensor as tn
from ptmfuse.errors import UsageError
from ptmfuse.losses import (
    LossSchedule,
    Temperature,
    cross_layer_loss,
    default_pos_weight,
    focal_loss,
    hierarchical_loss,
    intra_layer_loss,
    l2_normalize,
    total_loss,
    weighted_ce,
)
from ptmfuse.tensor import Tensor

LOG1P_EXP_M1 = math.log(1.0 + math.exp(-1.0))


def _logit(p):
    return Tensor(np.array([math.log(p / (1.0 - p))]))


def _unit_rows(rng, b, d):
    z = rng.normal(size=(b, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class TestTemperature:
    def test_init_value(self):
        assert Temperature.init().value().item() == pytest.approx(0.07, abs=1e-15)

    def test_floor(self):
        t = Temperature.init(0.5, floor=1e-3)
        t.rho.data[...] = -800.0
        assert t.value().item() >= 1e-3

    def test_init_below_floor(self):
        with pytest.raises(UsageError):
            Temperature.init(1e-4, floor=1e-3)


class TestIntraLayer:
    def test_identical_pair(self):
        z = Tensor(np.array([[0.6, 0.8], [0.6, 0.8]]))
        assert intra_layer_loss(z, [1, 1], 1.0).item() == pytest.approx(0.0, abs=1e-15)

    def test_hand_case(self):
        z = Tensor(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        assert intra_layer_loss(z, [0, 0, 1], 1.0).item() == pytest.approx(LOG1P_EXP_M1, abs=1e-12)

    def test_permutation_and_relabel(self, rng):
        z = _unit_rows(rng, 6, 4)
        y = np.array([0, 1, 1, 0, 1, 0])
        base = intra_layer_loss(Tensor(z), y, 0.3).item()
        perm = rng.permutation(6)
        assert intra_layer_loss(Tensor(z[perm]), y[perm], 0.3).item() == pytest.approx(base, abs=1e-12)
        assert intra_layer_loss(Tensor(z), 1 - y, 0.3).item() == pytest.approx(base, abs=1e-12)

    def test_scale_invariance(self, rng):
        z = _unit_rows(rng, 5, 3)
        y = [0, 1, 0, 1, 1]
        base = intra_layer_loss(Tensor(z), y, 0.5).item()
        with pytest.warns(UserWarning):
            scaled = intra_layer_loss(Tensor(3.0 * z), y, 0.5).item()
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_no_positives(self):
        z = Tensor(np.eye(2))
        assert intra_layer_loss(z, [0, 1], 1.0).item() == 0.0

    def test_batch_too_small(self):
        with pytest.raises(UsageError):
            intra_layer_loss(Tensor(np.array([[1.0, 0.0]])), [1], 1.0)

    def test_non_negative(self, rng):
        for _ in range(10):
            z = _unit_rows(rng, 8, 5)
            assert intra_layer_loss(Tensor(z), rng.integers(0, 2, size=8), 0.1).item() >= 0.0


class TestCrossLayer:
    def test_orthonormal(self):
        for b in (2, 3, 5):
            z = Tensor(np.eye(b))
            expected = -math.log(math.e / (math.e + b - 1))
            assert cross_layer_loss(z, z, 1.0).item() == pytest.approx(expected, abs=1e-12)
        assert cross_layer_loss(Tensor(np.eye(2)), Tensor(np.eye(2)), 1.0).item() == pytest.approx(LOG1P_EXP_M1)

    def test_single_sample(self, rng):
        z = Tensor(_unit_rows(rng, 1, 4))
        assert cross_layer_loss(z, Tensor(_unit_rows(rng, 1, 4)), 0.2).item() == pytest.approx(0.0, abs=1e-15)

    def test_joint_permutation(self, rng):
        za, zb = _unit_rows(rng, 6, 4), _unit_rows(rng, 6, 4)
        perm = rng.permutation(6)
        base = cross_layer_loss(Tensor(za), Tensor(zb), 0.4).item()
        assert cross_layer_loss(Tensor(za[perm]), Tensor(zb[perm]), 0.4).item() == pytest.approx(base, abs=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(UsageError):
            cross_layer_loss(Tensor(_unit_rows(rng, 3, 4)), Tensor(_unit_rows(rng, 4, 4)), 1.0)


class TestHierarchical:
    def test_parts_compose(self, rng):
        stages = [Tensor(rng.normal(size=(6, 5, 4))) for _ in range(3)]
        y = [0, 1, 0, 1, 1, 0]
        parts = hierarchical_loss(stages, y, 0.2, beta=0.7, parts=True)
        expected = sum(p.item() for p in parts.intra) / 3 + 0.35 * sum(p.item() for p in parts.cross)
        assert parts.total.item() == pytest.approx(expected, abs=1e-12)

    def test_identical_pair(self):
        # intra terms vanish; each cross term sees two equal logits, so ln 2
        f = Tensor(np.tile(np.array([1.0, 0.0]), (2, 3, 1)))
        total = hierarchical_loss([f, f, f], [1, 1], 1.0).item()
        assert total == pytest.approx(0.35 * 2 * math.log(2.0), abs=1e-12)

    def test_needs_three_stages(self, rng):
        with pytest.raises(UsageError):
            hierarchical_loss([Tensor(rng.normal(size=(2, 3, 4)))] * 2, [0, 1], 1.0)

    def test_temperature_gradient(self, rng):
        temp = Temperature.init(0.3)
        stages = [Tensor(rng.normal(size=(4, 3, 5))) for _ in range(3)]
        loss = hierarchical_loss(stages, [0, 1, 1, 0], temp)
        tn.backward(loss)
        assert temp.rho.grad is not None and np.isfinite(temp.rho.grad).all()


class TestFocal:
    def test_perfect(self):
        assert focal_loss(Tensor(np.array([50.0])), [1]).item() == pytest.approx(0.0, abs=1e-9)

    def test_cross_entropy_limit(self):
        assert focal_loss(_logit(0.5), [1], 0.0, 1.0).item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_gamma_two(self):
        assert focal_loss(_logit(0.5), [0], 2.0, 1.0).item() == pytest.approx(0.25 * math.log(2.0), abs=1e-12)

    def test_matches_bce(self, rng):
        x = rng.normal(size=7)
        y = rng.integers(0, 2, size=7)
        p = 1 / (1 + np.exp(-x))
        bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        assert focal_loss(Tensor(x), y, 0.0, 1.0).item() == pytest.approx(bce, abs=1e-12)


class TestWeightedCe:
    def test_unit_weight_is_bce(self, rng):
        x = rng.normal(size=9)
        y = rng.integers(0, 2, size=9)
        p = 1 / (1 + np.exp(-x))
        bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        assert weighted_ce(Tensor(x), y, 1.0).item() == pytest.approx(bce, abs=1e-12)

    def test_single_positive(self):
        assert weighted_ce(_logit(0.5), [1], 3.0).item() == pytest.approx(3 * math.log(2.0), abs=1e-12)

    def test_monotone(self):
        losses = [weighted_ce(Tensor(np.array([v, -v])), [1, 0], 2.0).item() for v in np.linspace(-3, 3, 13)]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_default_weight(self):
        assert default_pos_weight([0, 0, 0, 1]) == 3.0
        with pytest.raises(UsageError):
            default_pos_weight([1, 1])

    def test_rejects_bad_weight(self):
        with pytest.raises(UsageError):
            weighted_ce(Tensor(np.zeros(2)), [0, 1], 0.0)


class TestSchedule:
    def test_start_and_floor(self):
        s = LossSchedule(0.5, 10)
        assert s.weight(0) == 0.5
        assert all(s.weight(t) == 0.0 for t in (10, 11, 100))

    def test_monotone(self):
        s = LossSchedule(0.5, 7)
        w = [s.weight(t) for t in range(12)]
        assert all(b <= a for a, b in zip(w, w[1:]))

    def test_total(self):
        s = LossSchedule(0.5, 10)
        l_c, l_cont = Tensor(np.array(1.25)), Tensor(np.array(2.0))
        assert total_loss(l_c, l_cont, 0, s).item() == 2.25
        assert total_loss(l_c, l_cont, 10, s) is l_c

    def test_negative_epoch(self):
        with pytest.raises(UsageError):
            LossSchedule().weight(-1)


def test_l2_normalize(rng):
    z = l2_normalize(Tensor(rng.normal(size=(4, 6)))).data
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-14)
