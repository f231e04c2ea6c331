import numpy as np
import pytest

from refocus.core.ekpb import (
    EkpbBlock,
    PickTrace,
    cross_channel_softmax,
    ekpb_forward,
    pick_key_frequency,
)
from refocus.core.spectral import ComplexSpectrum, energy, rfft
from refocus.core.tensor import Tape, Tensor, grad_check, mse_loss, parameter, reduce_sum
from refocus.models import PickStrategy
from refocus.utils import ContractError, ShapeError


def spectrum(re, im=None, n=None):
    re = np.asarray(re, dtype=float)
    im = np.zeros_like(re) if im is None else np.asarray(im, dtype=float)
    n = n if n is not None else 2 * (re.shape[-1] - 1)
    return ComplexSpectrum(Tensor(re), Tensor(im), n)


class TestCrossChannelSoftmax:
    def test_equal_energies_uniform(self):
        np.testing.assert_allclose(cross_channel_softmax(np.full((4, 3), 2.0)), 0.25)

    def test_closed_form(self):
        probs = cross_channel_softmax(np.array([[0.0], [np.log(3.0)]]))
        np.testing.assert_allclose(probs[:, 0], [0.25, 0.75])

    def test_columns_sum_to_one(self, rng):
        probs = cross_channel_softmax(rng.uniform(0, 50, size=(5, 9)))
        np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-12)

    def test_permutation_equivariant(self, rng):
        E = rng.uniform(0, 3, size=(4, 6))
        perm = np.array([2, 0, 3, 1])
        np.testing.assert_allclose(cross_channel_softmax(E[perm]), cross_channel_softmax(E)[perm])

    def test_negative_energy_rejected(self):
        with pytest.raises(ContractError):
            cross_channel_softmax(np.array([[1.0], [-0.5]]))


class TestPickKeyFrequency:
    def test_single_channel_copies(self, rng):
        Hf = spectrum(rng.standard_normal((1, 5)), rng.standard_normal((1, 5)))
        probs = cross_channel_softmax(energy(Hf))
        for strategy in PickStrategy:
            Kf, trace = pick_key_frequency(Hf, probs, strategy, np.random.default_rng(0))
            np.testing.assert_array_equal(Kf.re.data, Hf.re.data)
            np.testing.assert_array_equal(Kf.im.data, Hf.im.data)
            assert trace.chosen_channel.tolist() == [0] * 5

    def test_max_and_min(self):
        Hf = spectrum([[3.0, 1.0], [2.0, 4.0]], n=2)
        probs = cross_channel_softmax(energy(Hf))
        _, trace = pick_key_frequency(Hf, probs, PickStrategy.MAX)
        assert trace.chosen_channel.tolist() == [0, 1]
        _, trace = pick_key_frequency(Hf, probs, PickStrategy.MIN)
        assert trace.chosen_channel.tolist() == [1, 0]

    def test_ties_go_to_lowest_index(self):
        Hf = spectrum([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]], n=2)
        probs = cross_channel_softmax(energy(Hf))
        for strategy in (PickStrategy.MAX, PickStrategy.MIN):
            _, trace = pick_key_frequency(Hf, probs, strategy)
            assert trace.chosen_channel.tolist() == [0, 0]

    def test_selected_entries_are_exact_copies(self, rng):
        Hf = spectrum(rng.standard_normal((4, 9)), rng.standard_normal((4, 9)))
        probs = cross_channel_softmax(energy(Hf))
        Kf, trace = pick_key_frequency(Hf, probs, PickStrategy.SOFTMAX, rng)
        cols = np.arange(9)
        assert (Kf.re.data[0] == Hf.re.data[trace.chosen_channel, cols]).all()
        assert (Kf.im.data[0] == Hf.im.data[trace.chosen_channel, cols]).all()

    def test_probability_columns_checked(self):
        Hf = spectrum(np.ones((2, 3)), n=4)
        with pytest.raises(ContractError):
            pick_key_frequency(Hf, np.full((2, 3), 0.6), PickStrategy.MAX)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            pick_key_frequency(spectrum(np.ones((2, 3)), n=4), np.full((3, 3), 1 / 3), PickStrategy.MAX)

    def test_softmax_needs_rng(self):
        Hf = spectrum(np.ones((2, 3)), n=4)
        with pytest.raises(ContractError):
            pick_key_frequency(Hf, np.full((2, 3), 0.5), PickStrategy.SOFTMAX)

    def test_sampling_follows_softmax_law(self, rng):
        draws = 100_000
        E = rng.uniform(0.0, 2.0, size=(4, 5))
        law = cross_channel_softmax(E)
        Hf = spectrum(np.broadcast_to(np.sqrt(E), (draws, 4, 5)), n=8)
        _, trace = pick_key_frequency(Hf, np.broadcast_to(law, (draws, 4, 5)), PickStrategy.SOFTMAX, rng)
        freq = np.stack([(trace.chosen_channel == c).mean(axis=0) for c in range(4)])
        assert np.abs(freq - law).max() < 0.01

    def test_gradient_reaches_only_picked_entries(self):
        re = parameter([[3.0, 1.0], [2.0, 4.0]])
        im = parameter(np.zeros((2, 2)))
        Hf = ComplexSpectrum(re, im, 2)
        with Tape() as tape:
            Kf, _ = pick_key_frequency(Hf, cross_channel_softmax(energy(Hf)), PickStrategy.MAX)
            tape.backward(reduce_sum(Kf.re))
        np.testing.assert_array_equal(re.grad, [[1.0, 0.0], [0.0, 1.0]])

    def test_trace_to_dict(self):
        trace = PickTrace(probabilities=np.full((2, 2, 3), 0.5), chosen_channel=np.zeros((2, 3), dtype=int))
        d = trace.to_dict(sample=1)
        assert d["chosen_channel"] == [0, 0, 0]
        assert np.asarray(d["probabilities"]).shape == (2, 3)


class TestEkpbForward:
    @pytest.fixture
    def block(self):
        return EkpbBlock(D=8, Q=8, rng=np.random.default_rng(3), strategy=PickStrategy.MAX)

    def test_shapes(self, block, rng):
        out, trace = ekpb_forward(rng.standard_normal((3, 8)), block)
        assert out.shape == (3, 8)
        assert trace.probabilities.shape == (3, 5)
        assert trace.chosen_channel.shape == (5,)
        out, trace = ekpb_forward(rng.standard_normal((2, 3, 8)), block)
        assert out.shape == (2, 3, 8)
        assert trace.chosen_channel.shape == (2, 5)
        assert np.isfinite(out.data).all()

    def test_batched_matches_single(self, block, rng):
        H = rng.standard_normal((2, 3, 8))
        batched, _ = ekpb_forward(H, block)
        for b in range(2):
            single, _ = ekpb_forward(H[b], block)
            np.testing.assert_allclose(batched.data[b], single.data, atol=1e-10)

    def test_permutation_equivariance_with_max(self, block, rng):
        H = rng.standard_normal((4, 8))
        perm = np.array([3, 1, 0, 2])
        out, _ = ekpb_forward(H, block)
        out_perm, _ = ekpb_forward(H[perm], block)
        np.testing.assert_allclose(out_perm.data, out.data[perm], atol=1e-10)

    def test_softmax_repeatable_with_seed(self, rng):
        block = EkpbBlock(D=8, Q=8, rng=np.random.default_rng(5), strategy=PickStrategy.SOFTMAX)
        H = rng.standard_normal((3, 8))
        a, ta = ekpb_forward(H, block, np.random.default_rng(9))
        b, tb = ekpb_forward(H, block, np.random.default_rng(9))
        np.testing.assert_array_equal(a.data, b.data)
        np.testing.assert_array_equal(ta.chosen_channel, tb.chosen_channel)

    def test_deterministic_flag_uses_argmax(self, rng):
        block = EkpbBlock(D=8, Q=8, rng=np.random.default_rng(5), strategy=PickStrategy.SOFTMAX)
        _, trace = ekpb_forward(rng.standard_normal((3, 8)), block, deterministic=True)
        energies_argmax = np.argmax(trace.probabilities, axis=0)
        np.testing.assert_array_equal(trace.chosen_channel, energies_argmax)

    def test_input_gradient(self, block, rng):
        target = Tensor(rng.standard_normal((3, 8)))
        err = grad_check(lambda t: mse_loss(ekpb_forward(t, block)[0], target), rng.standard_normal((3, 8)))
        assert err < 1e-4

    def test_wrong_width(self, block):
        with pytest.raises(ShapeError):
            ekpb_forward(np.ones((3, 6)), block)

    def test_odd_q_rejected(self):
        with pytest.raises(ContractError):
            EkpbBlock(D=8, Q=7, rng=np.random.default_rng(0))


def test_planted_key_is_recovered(rng):
    Q, key = 16, 3
    t = np.arange(Q)
    Hk = 0.05 * rng.standard_normal((4, Q))
    Hk[1] += 5.0 * np.sin(2 * np.pi * key * t / Q)
    Hk[2] += 5.0 * np.sin(2 * np.pi * key * t / Q + 1.0)
    Hf = rfft(Hk)
    probs = cross_channel_softmax(energy(Hf))
    assert probs[[1, 2], key].sum() > 0.9
    _, trace = pick_key_frequency(Hf, probs, PickStrategy.MAX)
    assert trace.chosen_channel[key] in (1, 2)
