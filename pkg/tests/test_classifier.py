import math

import numpy as np
import pytest

from bitextmine.autodiff import Tape, backward
from bitextmine.classifier import (
    CLAMP_EPS,
    LabeledPair,
    batch_loss,
    init_head,
    match_features,
    pair_loss,
    probability,
)
from bitextmine.model import ModelDims, example_loss, init_model
from bitextmine.textcore import Sentence
from fdcheck import finite_diff, max_rel_err, randomize

TOL = 1e-4

# frozen independently: -ln(0.9) - ln(0.8) at 40 decimal digits
TWO_PAIR_LOSS = 0.32850406697203605


def make_head(two_d=4, k=4, seed=0, scale=None):
    head = init_head(two_d, k, np.random.default_rng([seed, 0]))
    if scale is not None:
        randomize(head.parameters(), np.random.default_rng([seed, 99]), scale)
    return head


class TestMatchFeatures:
    def test_equal_vectors_zero_difference(self):
        t = Tape()
        v = t.constant([0.5, -1.5, 2.0])
        prod, diff = match_features(v, t.constant([0.5, -1.5, 2.0]))
        np.testing.assert_array_equal(diff.data, np.zeros(3))
        np.testing.assert_array_equal(prod.data, [0.25, 2.25, 4.0])

    def test_definition(self):
        t = Tape()
        prod, diff = match_features(t.constant([1.0, -1.0]), t.constant([-1.0, 1.0]))
        np.testing.assert_array_equal(prod.data, [-1.0, -1.0])
        np.testing.assert_array_equal(diff.data, [2.0, 2.0])

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(3)
        a, b = rng.uniform(-2, 2, (2, 6))
        t = Tape()
        p1, d1 = match_features(t.constant(a), t.constant(b))
        p2, d2 = match_features(t.constant(b), t.constant(a))
        assert np.array_equal(p1.data, p2.data)
        assert np.array_equal(d1.data, d2.data)

    def test_size_mismatch(self):
        t = Tape()
        with pytest.raises(Exception, match="shapes"):
            match_features(t.constant(np.ones(3)), t.constant(np.ones(4)))


class TestProbability:
    def test_zero_head_gives_half(self):
        head = make_head()
        for q in head.parameters():
            q.value[...] = 0.0
        t = Tape()
        prod, diff = match_features(t.constant(np.ones(4)), t.constant(np.zeros(4)))
        p = probability(prod, diff, head, t)
        assert p.item() == 0.5

    def test_large_bias_saturates(self):
        head = make_head()
        for q in head.parameters():
            q.value[...] = 0.0
        head.b_out.value[...] = 20.0
        t = Tape()
        prod, diff = match_features(t.constant(np.ones(4)), t.constant(np.zeros(4)))
        assert probability(prod, diff, head, t).item() > 0.999999

    def test_range(self):
        head = make_head(scale=2.0)
        rng = np.random.default_rng(5)
        for _ in range(50):
            t = Tape()
            a, b = rng.uniform(-5, 5, (2, 4))
            prod, diff = match_features(t.constant(a), t.constant(b))
            p = probability(prod, diff, head, t).item()
            assert 0.0 < p < 1.0

    def test_symmetry_through_probability_bitwise(self):
        head = make_head(scale=0.9)
        rng = np.random.default_rng(6)
        for _ in range(20):
            a, b = rng.uniform(-2, 2, (2, 4))
            t = Tape()
            p1 = probability(*match_features(t.constant(a), t.constant(b)), head, t)
            p2 = probability(*match_features(t.constant(b), t.constant(a)), head, t)
            assert p1.item() == p2.item()

    def test_head_gradients(self):
        head = make_head(scale=0.8)
        a = np.array([0.4, -0.6, 1.1, -0.2])
        b = np.array([-0.8, 0.5, 0.9, 0.7])

        def run():
            t = Tape()
            prod, diff = match_features(t.constant(a), t.constant(b))
            return t, probability(prod, diff, head, t)

        t, p = run()
        analytic = backward(t, p)
        numeric = finite_diff(lambda: float(run()[1].data), head.parameters())
        assert max_rel_err({q: analytic[q] for q in head.parameters()}, numeric) < TOL


class TestBatchLoss:
    def test_half_probability_gives_ln2(self):
        assert batch_loss([(0.5, 1)]) == pytest.approx(math.log(2), abs=1e-12)
        assert batch_loss([(0.5, 0)]) == pytest.approx(math.log(2), abs=1e-12)

    def test_perfect_prediction_near_zero(self):
        assert batch_loss([(1.0, 1)]) == pytest.approx(0.0, abs=1e-11)
        assert batch_loss([(0.0, 0)]) == pytest.approx(0.0, abs=1e-11)

    def test_two_pair_value(self):
        assert batch_loss([(0.9, 1), (0.2, 0)]) == pytest.approx(TWO_PAIR_LOSS, abs=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            batch_loss([])

    def test_decomposable_over_concatenation(self):
        rng = np.random.default_rng(7)
        a = [(float(p), int(y)) for p, y in zip(rng.uniform(0.01, 0.99, 5), rng.integers(0, 2, 5))]
        b = [(float(p), int(y)) for p, y in zip(rng.uniform(0.01, 0.99, 4), rng.integers(0, 2, 4))]
        assert batch_loss(a + b) == pytest.approx(batch_loss(a) + batch_loss(b), rel=1e-12)

    def test_sum_not_mean(self):
        one = batch_loss([(0.5, 1)])
        assert batch_loss([(0.5, 1)] * 3) == pytest.approx(3 * one, rel=1e-12)

    def test_tape_loss_matches_float_loss(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            p_val = float(rng.uniform(1e-6, 1 - 1e-6))
            y = int(rng.integers(0, 2))
            t = Tape()
            p = Tape.constant(t, p_val)
            assert pair_loss(p, y).item() == batch_loss([(p_val, y)])

    def test_pair_loss_gradient_sign(self):
        # increasing p decreases the y=1 loss and increases the y=0 loss
        from bitextmine.autodiff import Parameter

        q = Parameter("p", np.array(0.7))
        t = Tape()
        g1 = backward(t, pair_loss(t.watch(q), 1))[q]
        t = Tape()
        g0 = backward(t, pair_loss(t.watch(q), 0))[q]
        assert g1 < 0 < g0


class TestLabeledPair:
    def test_label_validated(self):
        s = Sentence((1,), "x")
        with pytest.raises(ValueError):
            LabeledPair(s, s, 2)


class TestFullModelGradient:
    def test_encoder_and_head_through_batch_loss(self):
        dims = ModelDims(src_vocab=9, tgt_vocab=9, embed=4, hidden=4, match=4)
        model = init_model(dims, seed=0)
        randomize(model.parameters(), np.random.default_rng([0, 99]))
        pairs = [
            LabeledPair(Sentence((4, 5, 6), "a"), Sentence((5, 6), "b"), 1),
            LabeledPair(Sentence((6, 7), "c"), Sentence((4, 8, 5, 6), "d"), 0),
            LabeledPair(Sentence((8,), "e"), Sentence((7, 7, 4), "f"), 1),
        ]

        def total_loss() -> float:
            return batch_loss([(example_loss(model, pr, Tape())[1], pr.y) for pr in pairs])

        params = model.parameters()
        analytic = {q: np.zeros_like(q.value) for q in params}
        for pr in pairs:
            t = Tape()
            loss_t, _ = example_loss(model, pr, t)
            backward(t, loss_t, into=analytic)
        numeric = finite_diff(total_loss, params)
        assert max_rel_err(analytic, numeric) < TOL
