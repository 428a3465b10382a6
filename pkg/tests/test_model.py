import numpy as np
import pytest

from inflex import autodiff as ad
from inflex import serialize
from inflex.autodiff import Tape, Tensor
from inflex.corpus import EOS_ID, PAD_ID, Example, build_vocab
from inflex.errors import DataError, UsageError, VocabularyError
from inflex.model import (LossWeights, ModelConfig, ModelParams, batch_loss, coverage_penalty, decode,
                          discriminate_language, encode, encode_tags, make_batch, param_shapes, parameter_count)

SMALL = ModelConfig(char_dim=5, tag_dim=4, hidden=6, attention=5, tag_attention=4, disc_hidden=3)

DATA = [
    Example("abc", ("N", "PL"), "abcs", "l1"),
    Example("bca", ("V",), "bcaed", "l2"),
    Example("cab", ("N", "SG", "ACC"), "ca", "l1"),
]


def params(cfg=SMALL, data=DATA, seed=0):
    return ModelParams.init(cfg, build_vocab([data]), np.random.default_rng(seed))


def loss_value(examples, p, **kw):
    with ad.no_tape():
        return batch_loss(make_batch(examples, p.vocab), p, **kw)[0].item()


def test_parameter_shapes_and_count():
    p = params()
    V, Tn, L = p.vocab.n_chars, p.vocab.n_tags, p.vocab.n_languages
    shapes = param_shapes(SMALL, V, Tn, L)
    assert shapes["E_char"] == (V, 5) and shapes["enc_fwd_Wx"] == (5, 18)
    assert shapes["attn_x_Wh"] == (12, 5) and shapes["attn_x_markov"] == (3, 5)
    assert shapes["disc_W1"] == (12, 3) and shapes["disc_W2"] == (3, L)
    assert p.num_parameters() == parameter_count(SMALL, V, Tn, L)
    std = ModelConfig(char_dim=5, tag_dim=4, hidden=6, attention=5, coupled_lstm=False, disc_input="forward")
    s2 = param_shapes(std, V, Tn, L)
    assert s2["dec_Wh"] == (6, 24) and s2["disc_W1"] == (6, 100)


def test_init_is_seeded():
    a, b = params(seed=3), params(seed=3)
    assert all(np.array_equal(x.value, y.value) for x, y in zip(a, b))
    assert not np.array_equal(params(seed=4)["E_char"].value, a["E_char"].value)
    assert not a["dec_b"].value.any()


def test_batch_layout():
    p = params()
    b = make_batch(DATA, p.vocab)
    assert b.lemma.shape == (3, 3) and b.tags.shape == (3, 3)
    assert b.tag_mask.tolist() == [[1, 1, 0], [1, 0, 0], [1, 1, 1]]
    assert b.target.shape == (3, 6)
    assert b.target[2, 2] == EOS_ID and (b.target[2, 3:] == PAD_ID).all()
    assert b.target_len.tolist() == [4, 5, 2]


def test_batched_loss_equals_sum_of_single_losses():
    p = params()
    total = loss_value(DATA, p)
    singles = sum(loss_value([e], p) for e in DATA)
    assert abs(total - singles) < 1e-9


def test_tag_order_does_not_matter():
    p = params()
    e = DATA[2]
    shuffled = e.replace(tags=(e.tags[2], e.tags[0], e.tags[1]))
    assert abs(loss_value([e], p) - loss_value([shuffled], p)) < 1e-10
    b = make_batch([e, shuffled], p.vocab)
    h_t, _ = encode_tags(b.tags, b.tag_mask, p)
    np.testing.assert_allclose(h_t.value[1], h_t.value[0][[2, 0, 1]], atol=1e-12)


def test_coverage_penalty_closed_forms():
    perm = np.eye(3)[[2, 0, 1]]
    assert coverage_penalty(Tensor(perm), 0.1).item() == 0.0
    concentrated = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    assert abs(coverage_penalty(Tensor(concentrated), 0.1).item() - 0.1 * np.sqrt(5)) < 1e-12


def test_coverage_penalty_ignores_masked_rows_and_columns():
    w = np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.3, 0.4]]])
    rows = np.array([[True, True, False]])
    cols = np.array([[True, True, False]])
    assert coverage_penalty(Tensor(w), 1.0, rows, cols).item() == 0.0


def test_single_language_disables_discriminator():
    data = [e.replace(language_id="only") for e in DATA]
    p = params(data=data)
    b = make_batch(data, p.vocab)
    loss, probs = discriminate_language(encode(b, p).h_x_final, p, b.langs)
    assert loss.item() == 0.0 and probs is None


def test_discriminator_probabilities():
    p = params()
    b = make_batch(DATA, p.vocab)
    loss, probs = discriminate_language(encode(b, p).h_x_final, p, b.langs)
    assert probs.shape == (3, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    assert abs(loss.item() + np.log(probs[np.arange(3), b.langs]).sum()) < 1e-10


def test_full_teacher_forcing_probability_matches_plain_teacher_forcing():
    p = params()
    b = make_batch(DATA, p.vocab)
    with ad.no_tape():
        plain, info = batch_loss(b, p)
        sampled, info2 = batch_loss(b, p, teacher_forcing_prob=1.0, rng=np.random.default_rng(1))
    assert plain.item() == sampled.item()
    assert np.array_equal(info.alpha_x, info2.alpha_x)


def test_scheduled_sampling_needs_rng_and_changes_loss():
    p = params()
    b = make_batch(DATA, p.vocab)
    with pytest.raises(UsageError):
        batch_loss(b, p, teacher_forcing_prob=0.5)
    with ad.no_tape():
        a = batch_loss(b, p, teacher_forcing_prob=0.0, rng=np.random.default_rng(1))[0].item()
    assert a != loss_value(DATA, p)


@pytest.mark.parametrize("cfg", [
    SMALL,
    ModelConfig(char_dim=5, tag_dim=4, hidden=6, attention=5, tag_attention=4, disc_hidden=3, coupled_lstm=False),
    ModelConfig(char_dim=5, tag_dim=4, hidden=6, attention=5, tag_attention=4, disc_hidden=3, markov=False),
    ModelConfig(char_dim=5, tag_dim=4, hidden=6, attention=5, tag_attention=4, disc_hidden=3, disc_input="forward"),
])
def test_every_variant_trains_with_finite_gradients(cfg):
    p = params(cfg)
    with Tape() as tape:
        loss, info = batch_loss(make_batch(DATA, p.vocab), p, LossWeights(coverage=0.5))
        tape.backward(loss)
    assert np.isfinite(loss.item())
    assert all(np.isfinite(t.grad).all() for t in p)
    assert np.abs(p["out_W"].grad).sum() > 0
    np.testing.assert_allclose(info.alpha_x.sum(axis=-1), 1.0)


def test_attention_rows_respect_padding():
    p = params()
    b = make_batch(DATA, p.vocab)
    with ad.no_tape():
        _, info = batch_loss(b, p)
    assert (info.alpha_t[1, :, 1:] == 0).all()  # one tag only


def test_decode_shapes_and_length_bound():
    p = params()
    preds = decode(DATA, [p])
    for e, pr in zip(DATA, preds):
        K = len(pr.form)
        assert K <= 2 * len(e.lemma) + 10
        assert pr.alpha_t.shape == (K, len(e.tags)) and pr.alpha_x.shape == (K, len(e.lemma))
    assert decode(DATA, [p], max_len=1)[0].form.__len__() <= 1


def test_decode_of_unlabelled_input_and_batch_size_independence():
    p = params()
    bare = [e.replace(form=None) for e in DATA]
    assert [x.form for x in decode(bare, [p], batch_size=1)] == [x.form for x in decode(bare, [p], batch_size=64)]


def test_identical_ensemble_decodes_like_single_model():
    p = params()
    single = decode(DATA, [p])
    triple = decode(DATA, [p, p.copy(), p.copy()])
    assert [x.form for x in single] == [x.form for x in triple]


def test_ensemble_needs_matching_vocabularies():
    with pytest.raises(UsageError):
        decode(DATA, [params(), params(data=DATA[:1])])
    with pytest.raises(UsageError):
        decode(DATA, [])


def test_unknown_tag_at_inference_is_a_vocabulary_error():
    with pytest.raises(VocabularyError):
        decode([Example("abc", ("ZZZ",), None)], [params()])


def test_serialization_round_trip(tmp_path):
    p = params()
    serialize.save(tmp_path / "m", p, {"slot": "acc"})
    q, meta = serialize.load(tmp_path / "m")
    assert meta == {"slot": "acc"}
    assert q.config == p.config and q.vocab.compatible(p.vocab)
    assert all(np.array_equal(a.value, b.value) for a, b in zip(p, q))
    assert serialize.to_bytes(p, {"slot": "acc"}) == (tmp_path / "m").read_bytes()
    assert [x.form for x in decode(DATA, [p])] == [x.form for x in decode(DATA, [q])]


def test_serialization_layout(tmp_path):
    p = params()
    raw = serialize.to_bytes(p)
    assert raw[:8] == b"INFLXMDL"
    version = int.from_bytes(raw[8:12], "little")
    hlen = int.from_bytes(raw[12:20], "little")
    assert version == serialize.VERSION
    body = raw[20 + hlen:]
    assert len(body) == 8 * p.num_parameters()
    first = np.frombuffer(body[:8 * p["E_char"].size], dtype="<f8")
    assert np.array_equal(first, p["E_char"].value.reshape(-1))


def test_corrupt_model_files(tmp_path):
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(DataError):
        serialize.load(tmp_path / "bad")
    raw = serialize.to_bytes(params())
    (tmp_path / "short").write_bytes(raw[:-8] )
    with pytest.raises(Exception):
        serialize.load(tmp_path / "short")
    (tmp_path / "long").write_bytes(raw + b"\0" * 8)
    with pytest.raises(DataError):
        serialize.load(tmp_path / "long")
