"""Two-step attention encoder-decoder for inflection.

Lemma characters go through a bidirectional coupled LSTM, tags through a
single-head self-attention layer without positions.  At every output step
the decoder first attends over tags with its previous state, adds the tag
context to that state, and uses the sum to attend over lemma characters;
the character context and the previous output character then update the
recurrent state, which is projected to a distribution over characters.

Everything runs on padded minibatches (leading batch axis) built from the
autodiff primitives, so a single example is just a batch of one.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Example, Vocabulary
from .errors import DimensionError, UsageError, VocabularyError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    char_dim: int = 32
    tag_dim: int = 32
    hidden: int = 100
    attention: int = 100
    tag_attention: int = 100
    disc_hidden: int = 100
    coupled_lstm: bool = True
    markov: bool = True
    # "concat": last forward || last backward state; "forward": last forward only
    disc_input: str = "concat"
    grad_reverse_scale: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossWeights:
    coverage: float = 0.1
    adversarial: float = 1.0
    use_adversarial: bool = True


def param_shapes(cfg: ModelConfig, n_chars: int, n_tags: int, n_langs: int) -> dict[str, tuple[int, ...]]:
    """Every learned tensor, in serialization order."""
    H, A, G = cfg.hidden, cfg.attention, (3 if cfg.coupled_lstm else 4) * cfg.hidden
    disc_in = 2 * H if cfg.disc_input == "concat" else H
    return {
        "E_char": (n_chars, cfg.char_dim),
        "E_tag": (n_tags, cfg.tag_dim),
        "enc_fwd_Wx": (cfg.char_dim, G), "enc_fwd_Wh": (H, G), "enc_fwd_b": (G,),
        "enc_bwd_Wx": (cfg.char_dim, G), "enc_bwd_Wh": (H, G), "enc_bwd_b": (G,),
        "tag_Wq": (cfg.tag_dim, cfg.tag_attention), "tag_Wk": (cfg.tag_dim, cfg.tag_attention),
        "tag_Wv": (cfg.tag_dim, H),
        "attn_t_v": (A,), "attn_t_Wq": (H, A), "attn_t_Wh": (H, A),
        "attn_x_v": (A,), "attn_x_Wq": (H, A), "attn_x_Wh": (2 * H, A), "attn_x_markov": (3, A),
        "dec_Wc": (2 * H, G), "dec_We": (cfg.char_dim, G), "dec_Wh": (H, G), "dec_b": (G,),
        "dec_h0": (H,),
        "out_W": (H, n_chars), "out_b": (n_chars,),
        "disc_W1": (disc_in, cfg.disc_hidden), "disc_b1": (cfg.disc_hidden,),
        "disc_W2": (cfg.disc_hidden, n_langs), "disc_b2": (n_langs,),
    }


def parameter_count(cfg: ModelConfig, n_chars: int, n_tags: int, n_langs: int) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg, n_chars, n_tags, n_langs).values())


class ModelParams:
    """Named learned tensors plus the vocabulary and dimensions they serve."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, tensors: dict[str, Tensor]):
        self.config = config
        self.vocab = vocab
        self.tensors = tensors

    @classmethod
    def init(cls, config: ModelConfig, vocab: Vocabulary, rng: np.random.Generator) -> "ModelParams":
        tensors = {}
        for name, shape in param_shapes(config, vocab.n_chars, vocab.n_tags, vocab.n_languages).items():
            if len(shape) == 1 and (name.endswith("_b") or name[-3:] in ("_b1", "_b2")):
                value = np.zeros(shape)
            else:
                fan = shape[0] + shape[-1] if len(shape) == 2 else shape[0] + 1
                bound = np.sqrt(6.0 / fan)
                value = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(value, requires_grad=True, name=name)
        return cls(config, vocab, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def items(self):
        return self.tensors.items()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self.tensors.items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self.tensors[k].value[...] = v

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.vocab,
                           {k: Tensor(t.value.copy(), requires_grad=True, name=k) for k, t in self.tensors.items()})


# ------------------------------------------------------------------ batches

@dataclass
class Batch:
    lemma: np.ndarray          # (B, N) char ids, PAD beyond length
    lemma_len: np.ndarray      # (B,)
    tags: np.ndarray           # (B, M) tag ids
    tag_mask: np.ndarray       # (B, M) bool
    langs: np.ndarray          # (B,)
    target: np.ndarray | None = None       # (B, T) form ids + EOS, PAD beyond
    target_len: np.ndarray | None = None   # (B,) form length without EOS
    examples: Sequence[Example] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.lemma.shape[0]

    @property
    def lemma_mask(self) -> np.ndarray:
        return np.arange(self.lemma.shape[1])[None, :] < self.lemma_len[:, None]


def make_batch(examples: Sequence[Example], vocab: Vocabulary, with_target: bool = True) -> Batch:
    if not examples:
        raise UsageError("empty batch")
    B = len(examples)
    lemmas = [vocab.encode_chars(e.lemma) for e in examples]
    tags = [vocab.encode_tags(e.tags) for e in examples]
    N = max(map(len, lemmas))
    M = max(map(len, tags))
    lemma = np.full((B, N), PAD_ID, dtype=np.intp)
    tag = np.zeros((B, M), dtype=np.intp)
    tag_mask = np.zeros((B, M), dtype=bool)
    for b, (l, t) in enumerate(zip(lemmas, tags)):
        lemma[b, :len(l)] = l
        tag[b, :len(t)] = t
        tag_mask[b, :len(t)] = True
    langs = np.array([vocab.lang_to_id.get(e.language_id, 0) for e in examples], dtype=np.intp)
    batch = Batch(lemma, np.array([len(l) for l in lemmas]), tag, tag_mask, langs, examples=examples)
    if with_target:
        if any(e.form is None for e in examples):
            raise UsageError("training batch contains an example without a form")
        forms = [vocab.encode_chars(e.form) for e in examples]
        T = max(map(len, forms)) + 1
        target = np.full((B, T), PAD_ID, dtype=np.intp)
        for b, f in enumerate(forms):
            target[b, :len(f)] = f
            target[b, len(f)] = EOS_ID
        batch.target = target
        batch.target_len = np.array([len(f) for f in forms])
    return batch


# ------------------------------------------------------------------ encoders

@dataclass
class EncoderStates:
    h_x: Tensor            # (B, N, 2H)
    h_t: Tensor            # (B, M, H)
    h_x_final: Tensor      # (B, 2H) or (B, H)
    keys_x: Tensor         # (B, N, A) lemma states projected for attention
    keys_t: Tensor         # (B, M, A)
    lemma_mask: np.ndarray
    tag_mask: np.ndarray
    tag_weights: Tensor | None = None   # (B, M, M) self-attention weights


def _check_ids(ids: np.ndarray, size: int, what: str) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= size):
        raise VocabularyError(f"{what} id out of range (vocabulary has {size})")


def _run_lstm(p: ModelParams, prefix: str, ids: np.ndarray, mask: np.ndarray):
    H = p.config.hidden
    B, N = ids.shape
    xp = ad.add(ad.matmul(ad.pick_row(p["E_char"], ids), p[prefix + "Wx"]), p[prefix + "b"])
    h = Tensor(np.zeros((B, H)))
    c = Tensor(np.zeros((B, H)))
    states = []
    for x_t, t in zip(ad.unstack(xp, axis=1), range(N)):
        gates = ad.linear([(h, p[prefix + "Wh"])], x_t)
        h, c = ad.lstm_cell(gates, c, h, mask[:, t], coupled=p.config.coupled_lstm)
        states.append(h)
    return states, h


def encode_lemma(lemma: np.ndarray, lemma_len: np.ndarray, p: ModelParams):
    """Bidirectional coupled-LSTM states (B, N, 2H) and the final state.

    The backward direction runs over each lemma reversed within its own
    length; its outputs are put back at their original positions.
    """
    _check_ids(lemma, p.vocab.n_chars, "character")
    B, N = lemma.shape
    if N == 0 or (lemma_len < 1).any():
        raise UsageError("encode_lemma: empty lemma")
    mask = np.arange(N)[None, :] < lemma_len[:, None]
    pos = np.arange(N)[None, :]
    rev = np.where(mask, lemma_len[:, None] - 1 - pos, pos)
    rows = np.arange(B)[:, None]
    fwd, fwd_last = _run_lstm(p, "enc_fwd_", lemma, mask)
    bwd, bwd_last = _run_lstm(p, "enc_bwd_", lemma[rows, rev], mask)
    hf = ad.stack(fwd, axis=1)
    hb = ad.index(ad.stack(bwd, axis=1), (rows, rev))
    h_x = ad.concat([hf, hb], axis=-1)
    if p.config.disc_input == "concat":
        final = ad.concat([fwd_last, bwd_last], axis=-1)
    else:
        final = fwd_last
    return h_x, final


def encode_tags(tags: np.ndarray, tag_mask: np.ndarray, p: ModelParams):
    """Single-head scaled dot-product self-attention over tag embeddings.

    No positional information enters, so permuting the tags permutes the
    outputs the same way.  Returns (states (B, M, H), weights (B, M, M)).
    """
    _check_ids(tags, p.vocab.n_tags, "tag")
    if tags.shape[1] == 0:
        raise UsageError("encode_tags: empty tag set")
    emb = ad.pick_row(p["E_tag"], tags)
    q = ad.matmul(emb, p["tag_Wq"])
    k = ad.matmul(emb, p["tag_Wk"])
    v = ad.matmul(emb, p["tag_Wv"])
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(p.config.tag_attention))
    weights = ad.softmax(scores, mask=tag_mask[:, None, :])
    return ad.matmul(weights, v), weights


def encode(batch: Batch, p: ModelParams) -> EncoderStates:
    h_x, final = encode_lemma(batch.lemma, batch.lemma_len, p)
    h_t, tw = encode_tags(batch.tags, batch.tag_mask, p)
    return EncoderStates(
        h_x=h_x, h_t=h_t, h_x_final=final,
        keys_x=ad.matmul(h_x, p["attn_x_Wh"]),
        keys_t=ad.matmul(h_t, p["attn_t_Wh"]),
        lemma_mask=batch.lemma_mask, tag_mask=batch.tag_mask, tag_weights=tw,
    )


# ------------------------------------------------------------------ attention / decoder

def attend(query: Tensor, states: Tensor, v: Tensor, W_q: Tensor, W_h: Tensor | None = None, *,
           keys: Tensor | None = None, markov: Tensor | None = None, prev_weights: Tensor | None = None,
           mask: np.ndarray | None = None):
    """Additive attention; returns ``(context, weights)``.

    score(j) = v . tanh(W_q query + W_h state_j + markov . window_j(prev))
    where window_j is (prev[j-1], prev[j], prev[j+1]) with zero padding.
    The Markov term is skipped when ``prev_weights`` is None.
    """
    if keys is None:
        keys = ad.matmul(states, W_h)
    if prev_weights is not None and markov is not None and prev_weights.shape != states.shape[:-1]:
        raise DimensionError(f"attend: previous weights {prev_weights.shape} vs states {states.shape}")
    scores = ad.additive_scores(keys, ad.matmul(query, W_q), v, prev=prev_weights, markov=markov)
    weights = ad.softmax(scores, mask=mask)
    return ad.weighted_sum(weights, states), weights


@dataclass
class DecoderState:
    s_prime: Tensor            # (B, H) recurrent output s'(k-1)
    cell: Tensor               # (B, H) LSTM memory
    alpha_t_prev: Tensor | None = None
    alpha_x_prev: Tensor | None = None
    s: Tensor | None = None    # tag-informed state of the last step


def initial_state(p: ModelParams, batch_size: int) -> DecoderState:
    H = p.config.hidden
    s0 = ad.add(Tensor(np.zeros((batch_size, H))), p["dec_h0"])
    return DecoderState(s0, Tensor(np.zeros((batch_size, H))))


def embed_inputs(p: ModelParams, ids: np.ndarray) -> Tensor:
    """Character-embedding contribution to the decoder gates (bias included)."""
    return ad.add(ad.matmul(ad.pick_row(p["E_char"], ids), p["dec_We"]), p["dec_b"])


def output_logits(p: ModelParams, s: Tensor) -> Tensor:
    return ad.linear([(s, p["out_W"])], p["out_b"])


def decoder_step(st: DecoderState, enc: EncoderStates, p: ModelParams, y_in: Tensor, project: bool = True):
    """One output step.  ``y_in`` is ``embed_inputs`` of y(k-1), shape (B, 3H).

    Returns (logits (B, V), new state); with ``project=False`` the logits
    are None and the caller projects ``state.s_prime`` itself.
    """
    c_t, a_t = attend(st.s_prime, enc.h_t, p["attn_t_v"], p["attn_t_Wq"], keys=enc.keys_t, mask=enc.tag_mask)
    s = ad.add(st.s_prime, c_t)
    c_x, a_x = attend(s, enc.h_x, p["attn_x_v"], p["attn_x_Wq"], keys=enc.keys_x,
                      markov=p["attn_x_markov"] if p.config.markov else None,
                      prev_weights=st.alpha_x_prev, mask=enc.lemma_mask)
    gates = ad.linear([(c_x, p["dec_Wc"]), (st.s_prime, p["dec_Wh"])], y_in)
    s_new, cell = ad.lstm_cell(gates, st.cell, st.s_prime, coupled=p.config.coupled_lstm)
    logits = output_logits(p, s_new) if project else None
    return logits, DecoderState(s_new, cell, a_t, a_x, s)


# ------------------------------------------------------------------ regularizers

def coverage_penalty(weights: Tensor, lam: float, row_mask: np.ndarray | None = None,
                     col_mask: np.ndarray | None = None) -> Tensor:
    """``lam * ||column sums - 1||_2`` for a (K, J) or batched (B, K, J) matrix.

    Masked rows (padding steps) do not count; masked columns (padding
    inputs) get no target.  Batched input returns the sum over the batch.
    """
    w = weights
    if row_mask is not None:
        w = ad.mul(w, row_mask[..., None].astype(np.float64))
    colsum = ad.sum(w, axis=-2)
    target = np.ones(colsum.shape) if col_mask is None else col_mask.astype(np.float64)
    norms = ad.l2_norm(ad.sub(colsum, target), axis=-1)
    return ad.scale(ad.sum(norms), lam)


def discriminate_language(h_x_final: Tensor, p: ModelParams, true_lang: np.ndarray, reverse: bool = True):
    """Language classifier on the encoder's final state, behind a gradient reversal.

    Returns ``(loss, probabilities)``; with fewer than two languages the
    loss is a constant zero.
    """
    if p.vocab.n_languages < 2:
        log.info("language discriminator disabled: only one language registered")
        return Tensor(0.0), None
    h = ad.grad_reverse(h_x_final, p.config.grad_reverse_scale) if reverse else h_x_final
    hidden = ad.tanh(ad.add(ad.matmul(h, p["disc_W1"]), p["disc_b1"]))
    logits = ad.add(ad.matmul(hidden, p["disc_W2"]), p["disc_b2"])
    loss = ad.cross_entropy(logits, np.asarray(true_lang))
    return loss, ad._softmax_np(logits.value)


# ------------------------------------------------------------------ training loss

@dataclass
class LossInfo:
    nll: float
    coverage: float
    adversarial: float
    alpha_t: np.ndarray    # (B, T, M)
    alpha_x: np.ndarray    # (B, T, N)


def batch_loss(batch: Batch, p: ModelParams, weights: LossWeights = LossWeights(),
               teacher_forcing_prob: float = 1.0, rng: np.random.Generator | None = None,
               adversarial: bool | None = None):
    """Summed loss over a batch: NLL + coverage on both attentions + adversarial term.

    With probability ``1 - teacher_forcing_prob`` per step and example the
    decoder is fed its own previous argmax instead of the gold character.
    """
    if batch.target is None:
        raise UsageError("batch_loss needs targets")
    B, T = batch.target.shape
    enc = encode(batch, p)
    gold_in = np.concatenate([np.full((B, 1), BOS_ID), batch.target[:, :-1]], axis=1)
    gold_proj = ad.unstack(embed_inputs(p, gold_in), axis=1)
    sampling = teacher_forcing_prob < 1.0
    if sampling and rng is None:
        raise UsageError("scheduled sampling needs an rng")
    st = initial_state(p, B)
    states_all, logits_all, at_all, ax_all = [], [], [], []
    prev_logits = None
    for k in range(T):
        y_in = gold_proj[k]
        if sampling and k > 0:
            use_pred = rng.random(B) >= teacher_forcing_prob
            if use_pred.any():
                pred = prev_logits.value.argmax(axis=-1)
                m = use_pred[:, None].astype(np.float64)
                y_in = ad.add(ad.mul(y_in, 1.0 - m), ad.mul(embed_inputs(p, pred), m))
        logits, st = decoder_step(st, enc, p, y_in, project=sampling)
        prev_logits = logits
        logits_all.append(logits)
        states_all.append(st.s_prime)
        at_all.append(st.alpha_t_prev)
        ax_all.append(st.alpha_x_prev)
    step_mask = np.arange(T)[None, :] <= batch.target_len[:, None]
    # without sampling nothing needs per-step logits, so project all steps at once
    all_logits = ad.stack(logits_all, axis=1) if sampling else output_logits(p, ad.stack(states_all, axis=1))
    nll = ad.cross_entropy(all_logits, batch.target, step_mask)
    total = nll
    At = ad.stack(at_all, axis=1)
    Ax = ad.stack(ax_all, axis=1)
    cov_val = 0.0
    if weights.coverage:
        char_rows = np.arange(T)[None, :] < batch.target_len[:, None]
        cov = ad.add(coverage_penalty(At, weights.coverage, char_rows, batch.tag_mask),
                     coverage_penalty(Ax, weights.coverage, char_rows, batch.lemma_mask))
        cov_val = cov.item()
        total = ad.add(total, cov)
    adv_val = 0.0
    use_adv = weights.use_adversarial if adversarial is None else adversarial
    if use_adv and weights.adversarial and p.vocab.n_languages >= 2:
        adv, _ = discriminate_language(enc.h_x_final, p, batch.langs)
        adv_val = adv.item()
        total = ad.add(total, ad.scale(adv, weights.adversarial))
    info = LossInfo(nll.item(), cov_val, adv_val, At.value, Ax.value)
    return total, info


def forward_loss(e: Example, p: ModelParams, weights: LossWeights = LossWeights(),
                 teacher_forcing_prob: float = 1.0, rng: np.random.Generator | None = None):
    """Loss of a single example plus its (K+1, M) and (K+1, N) attention matrices."""
    loss, info = batch_loss(make_batch([e], p.vocab), p, weights, teacher_forcing_prob, rng)
    return loss, info.alpha_t[0], info.alpha_x[0]


# ------------------------------------------------------------------ decoding

@dataclass
class Prediction:
    form: str
    alpha_t: np.ndarray    # (K, M), one row per emitted character
    alpha_x: np.ndarray    # (K, N)


def decode(examples: Sequence[Example], models: Sequence[ModelParams], max_len: int | None = None,
           batch_size: int = 64) -> list[Prediction]:
    """Greedy decoding with the equal-weight mean of every member's softmax.

    Stops at EOS or at ``2 * N + 10`` steps.  Attention matrices come from
    the first member.  Predicted UNK is replaced by the attended lemma
    character when that character is out of vocabulary.
    """
    if not models:
        raise UsageError("decode: no models")
    vocab = models[0].vocab
    for m in models[1:]:
        if not m.vocab.compatible(vocab):
            raise UsageError("decode: ensemble members have different vocabularies")
    out: list[Prediction] = []
    for start in range(0, len(examples), batch_size):
        out.extend(_decode_batch(examples[start:start + batch_size], models, max_len))
    return out


def _decode_batch(examples: Sequence[Example], models: Sequence[ModelParams], max_len: int | None):
    vocab = models[0].vocab
    batch = make_batch(examples, vocab, with_target=False)
    B = batch.size
    limits = 2 * batch.lemma_len + 10 if max_len is None else np.full(B, max_len)
    T = int(limits.max())
    with ad.no_tape():
        encs = [encode(batch, m) for m in models]
        states = [initial_state(m, B) for m in models]
        y = np.full(B, BOS_ID)
        done = np.zeros(B, dtype=bool)
        outputs = [[] for _ in range(B)]
        for k in range(T):
            probs = 0.0
            for i, m in enumerate(models):
                logits, states[i] = decoder_step(states[i], encs[i], m, embed_inputs(m, y))
                probs = probs + ad._softmax_np(logits.value)
            probs = probs / len(models)
            y = probs.argmax(axis=-1)
            a_t = states[0].alpha_t_prev.value
            a_x = states[0].alpha_x_prev.value
            for b in range(B):
                if done[b]:
                    continue
                if y[b] == EOS_ID or k >= limits[b]:
                    done[b] = True
                    continue
                outputs[b].append((int(y[b]), a_t[b].copy(), a_x[b, :batch.lemma_len[b]].copy()))
            if done.all():
                break
    preds = []
    for b, e in enumerate(examples):
        chars, at_rows, ax_rows = [], [], []
        oov = [c for c in e.lemma if c not in vocab.char_to_id]
        for cid, a_t, a_x in outputs[b]:
            ch = None
            if cid == UNK_ID:
                attended = int(a_x.argmax())
                if e.lemma[attended] not in vocab.char_to_id:
                    ch = e.lemma[attended]
                elif oov:
                    ch = oov[0]
            elif cid > UNK_ID:
                ch = vocab.chars[cid]
            if ch is not None:
                # PAD/BOS (and UNK with nothing to copy) emit no character and no row
                chars.append(ch)
                at_rows.append(a_t)
                ax_rows.append(a_x)
        M = len(e.tags)
        preds.append(Prediction(
            "".join(chars),
            np.array(at_rows)[:, :M] if at_rows else np.zeros((0, M)),
            np.array(ax_rows) if ax_rows else np.zeros((0, len(e.lemma))),
        ))
    return preds
