import math
from dataclasses import replace

import numpy as np
import pytest

from attrseq.data import AttributedSequence, encode_one_hot
from attrseq.errors import DimensionError, EmptySequenceError
from attrseq.nas import (
    att_forward,
    corpus_losses,
    init_nas,
    nas_embed,
    nas_gradients,
    nas_losses,
    nas_train,
    seq_forward,
    sequence_loss_grads,
)
from attrseq.numerics import Rng, grad_check
from attrseq.numerics.lstm import PARAM_NAMES
from attrseq.synthetic import generate_synthetic

from conftest import jitter_params, toy_record


def _zeroed(model, prefixes):
    return replace(model, params={k: np.zeros_like(v) if k.startswith(prefixes) else v
                                  for k, v in model.params.items()})


def test_zero_autoencoder_outputs():
    model = _zeroed(init_nas(Rng(0), 5, 4, d=3), ("enc", "dec"))
    V, x_hat, _ = att_forward(model, np.linspace(0, 1, 5))
    np.testing.assert_array_equal(V, 0.0)
    np.testing.assert_array_equal(x_hat, 0.5)


def test_autoencoder_hand_trace():
    model = init_nas(Rng(0), 2, 3, d=1)
    params = {**model.params, "enc0.W": np.array([[0.5, -0.25]]), "enc0.b": np.array([0.1]),
              "dec0.W": np.array([[1.5], [-2.0]]), "dec0.b": np.array([0.0, 0.3])}
    V, x_hat, _ = att_forward(model, np.array([0.8, 0.4]), params)
    assert V[0] == pytest.approx(0.4, abs=1e-15)
    # frozen from a 30-digit evaluation of sigmoid(1.5 V) and sigmoid(-2 V + 0.3)
    np.testing.assert_allclose(x_hat, [0.645656306225795453, 0.377540668798145435], atol=1e-15)


def test_autoencoder_width_check():
    with pytest.raises(DimensionError):
        att_forward(init_nas(Rng(0), 3, 4, d=2), np.zeros(4))


def test_uniform_predictions_from_zero_sequence_network():
    # the sigmoid candidate gate leaves h != 0 at zero weights, so the output layer is zeroed too
    model = _zeroed(init_nas(Rng(0), 3, 5, d=4), ("lstm.", "out."))
    enc = encode_one_hot([1, 2, 3], 5, 3)
    ys, _, _ = seq_forward(model, enc, np.zeros(4))
    for y in ys:
        np.testing.assert_allclose(y, 0.2, atol=1e-15)
    tanh_model = _zeroed(init_nas(Rng(0), 3, 5, d=4, candidate="tanh"), ("lstm.",))
    for y in seq_forward(tanh_model, enc, np.zeros(4))[0]:
        np.testing.assert_allclose(y, 0.2, atol=1e-15)


def test_one_prediction_per_item():
    model = init_nas(Rng(0), 3, 5, d=4)
    assert len(seq_forward(model, encode_one_hot([4], 5, 1), np.zeros(4))[0]) == 1
    assert len(seq_forward(model, encode_one_hot([4, 0, 1], 5, 6), np.zeros(4))[0]) == 3
    with pytest.raises(EmptySequenceError):
        seq_forward(model, encode_one_hot([], 5, 2), np.zeros(4))


def test_conditioning_reaches_later_steps_only_through_h1():
    rng = Rng(3)
    model = init_nas(rng, 3, 4, d=3)
    model = replace(model, params={**model.params, **{f"lstm.U_{g}": np.zeros((3, 3)) for g in "ifoc"}})
    enc = encode_one_hot([0, 3, 1], 4, 3)
    ys_a, c_a, (_, states_a, steps_a, _) = seq_forward(model, enc, np.zeros(3))
    ys_b, c_b, (_, states_b, steps_b, _) = seq_forward(model, enc, rng.normal(size=3))
    assert not np.allclose(ys_a[0], ys_b[0])
    for t in (1, 2):
        for ga, gb in zip(steps_a[t].gates, steps_b[t].gates):
            np.testing.assert_array_equal(ga, gb)
        np.testing.assert_array_equal(ys_a[t], ys_b[t])
    np.testing.assert_array_equal(c_a, c_b)


def test_ablation_ignores_attributes():
    model = init_nas(Rng(1), 3, 4, d=3, conditioned=False)
    enc = encode_one_hot([0, 3, 1], 4, 3)
    ys_a = seq_forward(model, enc, np.zeros(3))[0]
    ys_b = seq_forward(model, enc, np.ones(3))[0]
    for a, b in zip(ys_a, ys_b):
        np.testing.assert_array_equal(a, b)


def test_predictions_are_distributions():
    rng = Rng(5)
    model = init_nas(rng, 4, 6, d=5)
    for k in range(20):
        rec = toy_record(rng.child(str(k)), 4, 6, 1 + k % 6)
        V = att_forward(model, rec.attributes)[0]
        for y in seq_forward(model, encode_one_hot(rec.sequence, 6, 6), V)[0]:
            assert np.all(y >= 0) and abs(y.sum() - 1.0) < 1e-9


def test_perfect_reconstruction_and_uniform_sequence_losses():
    # a zero autoencoder reconstructs every input as 0.5, so x = 0.5 is reproduced exactly
    model = _zeroed(init_nas(Rng(0), 3, 4, d=2), ("enc", "dec", "lstm.", "out."))
    L_A, L_S = nas_losses(model, AttributedSequence("r", np.full(3, 0.5), (0, 3, 1)))
    assert L_A == 0.0
    assert L_S == pytest.approx(3 * math.log(4), rel=1e-14)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("conditioned", [True, False])
def test_full_gradient_matches_finite_differences(seed, conditioned):
    rng = Rng(seed)
    model = init_nas(rng.child("m"), 4, 5, d=3, hidden=(4,) if seed % 2 else (), conditioned=conditioned)
    params = jitter_params(model.params, rng.child("j"))
    # keep the ReLU encoder away from its kink
    params = {k: (np.abs(v) + 0.1 if k.startswith("enc") and k.endswith(".b") else v) for k, v in params.items()}
    rec = toy_record(rng.child("r"), 4, 5, 4)
    assert grad_check(lambda p: nas_gradients(model, rec, p), params) < 1e-4


def test_single_step_loss_gradient():
    rng = Rng(8)
    model = init_nas(rng, 3, 4, d=3)
    params = jitter_params(model.params, rng.child("j"))
    rec = toy_record(rng.child("r"), 3, 4, 4)
    enc = encode_one_hot(rec.sequence, 4, 4)
    V = rng.normal(size=3)
    f = lambda p: sequence_loss_grads(model, enc, V, {**params, **p}, only_step=2)[:2]
    seq_params = {k: v for k, v in params.items() if k.startswith(("lstm.", "out."))}
    assert grad_check(f, seq_params) < 1e-4


def test_zero_iterations_leave_model_unchanged(toy_corpus):
    model = init_nas(Rng(0), toy_corpus.u, toy_corpus.vocab.r, d=3)
    trained, _ = nas_train(model, toy_corpus, T_A=0, T_S=0, epochs=2)
    for k, v in model.params.items():
        np.testing.assert_array_equal(trained.params[k], v)


def test_second_attribute_iteration_does_not_increase_loss():
    deltas = []
    for seed in range(10):
        rng = Rng(seed)
        model = init_nas(rng, 5, 4, d=3)
        rec = toy_record(rng.child("r"), 5, 4, 3)
        losses = []
        for T_A in (1, 2):
            trained, _ = nas_train(model, [rec], lr=0.01, T_A=T_A, T_S=0, eps_A=0.0)
            losses.append(nas_losses(trained, rec)[0])
        deltas.append(losses[1] - losses[0])
    assert np.mean(deltas) <= 0.0
    assert sum(d <= 0 for d in deltas) >= 9


def test_training_lowers_both_losses():
    ds = generate_synthetic(Rng(1), 2, 25, u=5, r=8, len_range=(3, 6), noise=0.1)
    model = init_nas(Rng(2), 5, 8, d=6)
    L_A0, L_S0 = corpus_losses(model, ds.records)
    trained, history = nas_train(model, ds, epochs=5, T_A=2, T_S=2)
    assert len(history) == 5
    assert history[-1]["L_A"] < L_A0 and history[-1]["L_S"] < L_S0
    assert history[-1]["L_S"] < history[0]["L_S"]


def test_corpus_mode_and_validation_rows():
    ds = generate_synthetic(Rng(1), 2, 10, u=3, r=5, len_range=(2, 4))
    model = init_nas(Rng(2), 3, 5, d=3)
    trained, history = nas_train(model, ds.records[:15], epochs=3, corpus_mode=True, rng=Rng(4),
                                 validation=list(ds.records[15:]))
    assert all("val_loss" in row for row in history)
    assert history[-1]["train_loss"] < sum(corpus_losses(model, ds.records[:15]))


def test_embedding_contract():
    rng = Rng(6)
    model = init_nas(rng, 4, 5, d=7)
    rec = toy_record(rng.child("r"), 4, 5, 4)
    twin = AttributedSequence("twin", rec.attributes.copy(), rec.sequence)
    e = nas_embed(model, rec)
    assert e.shape == (7,)
    np.testing.assert_array_equal(e, nas_embed(model, rec))
    np.testing.assert_array_equal(e, nas_embed(model, twin))
    with pytest.raises(EmptySequenceError):
        nas_embed(model, AttributedSequence("e", rec.attributes, ()))


def test_embedding_independent_of_padding():
    rng = Rng(6)
    model = init_nas(rng, 4, 5, d=3)
    rec = toy_record(rng.child("r"), 4, 5, 6)
    V = att_forward(model, rec.attributes)[0]
    c10 = seq_forward(model, encode_one_hot(rec.sequence, 5, 10), V)[1]
    c20 = seq_forward(model, encode_one_hot(rec.sequence, 5, 20), V)[1]
    np.testing.assert_array_equal(c10, c20)
    np.testing.assert_array_equal(c10, nas_embed(model, rec))


def test_parameter_layout():
    model = init_nas(Rng(0), 6, 9, d=4, hidden=(5,))
    assert model.M == 2 and model.enc_widths == (5, 4)
    assert model.params["dec1.W"].shape == (6, 5)
    assert {f"lstm.{n}" for n in PARAM_NAMES} <= set(model.params)
    assert model.params["out.W"].shape == (9, 4)
