"""Three-phase training schedule, SGD, dev monitoring and checkpointing.

Phase 1 warms up on the training triples plus their copy triples until the
model copies reliably.  Phase 2 mixes high-resource, low-resource and
hallucinated data with interposed copy tasks and the language
discriminator.  Phase 3 fine-tunes on the low-resource data alone, one
example per step, with scheduled sampling.

Phases 2 and 3 evaluate on dev after every epoch, decay the learning rate
after ``decay_patience`` epochs without an accuracy improvement, and keep
three snapshots: best accuracy, best Levenshtein distance, and the last
one that improved both.
"""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import autodiff as ad
from . import serialize
from .autodiff import Tensor
from .corpus import Example, Vocabulary, build_vocab, make_copy_triples, upsample
from .errors import DataError, NumericError, UsageError
from .hallucinate import hallucinate_dataset
from .metrics import exact_match_accuracy, mean_levenshtein
from .model import (LossWeights, ModelConfig, ModelParams, batch_loss, decode, make_batch)
from .rng import stream

log = logging.getLogger(__name__)

SLOTS = ("acc", "lev", "both")
LOG_COLUMNS = ("phase", "epoch", "lr", "train_loss", "dev_acc", "dev_lev", "decayed")


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 0.1
    lr_decay: float = 0.5
    decay_patience: int = 6
    max_epochs: tuple[int, int, int] = (20, 40, 40)
    batch_sizes: tuple[int, int, int] = (10, 10, 1)
    warmup_copy_threshold: float = 0.75
    phase2_copy_prob: float = 0.30
    phase3_sample_prob: float = 0.5
    coverage: float = 0.1
    adv_weight: float = 1.0
    adversarial: bool = True
    hallucinate: int = 0
    min_stem: int = 3
    seed: int = 0
    # global gradient-norm clip; 0 disables
    clip_norm: float = 5.0
    copy_eval_size: int = 200
    eval_batch_size: int = 64
    char_dim: int = 32
    tag_dim: int = 32
    hidden: int = 100
    attention: int = 100
    tag_attention: int = 100
    disc_hidden: int = 100
    coupled_lstm: bool = True
    markov: bool = True
    disc_input: str = "concat"
    grad_reverse_scale: float = 1.0

    def __post_init__(self):
        for name in ("warmup_copy_threshold", "phase2_copy_prob", "phase3_sample_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {v}")
        for name in ("max_epochs", "batch_sizes"):
            v = getattr(self, name)
            if len(v) != 3:
                raise UsageError(f"{name} needs one value per phase, got {v}")
        if min(self.batch_sizes) < 1:
            raise UsageError(f"batch sizes must be >= 1, got {self.batch_sizes}")
        if min(self.max_epochs) < 0:
            raise UsageError(f"epoch budgets must be >= 0, got {self.max_epochs}")
        if self.decay_patience < 1:
            raise UsageError("decay_patience must be >= 1")
        if self.lr < 0 or not 0 < self.lr_decay <= 1:
            raise UsageError("lr must be >= 0 and lr_decay in (0, 1]")
        if self.hallucinate < 0 or self.min_stem < 1 or self.copy_eval_size < 1:
            raise UsageError("hallucinate >= 0, min_stem >= 1 and copy_eval_size >= 1 required")
        if self.disc_input not in ("concat", "forward"):
            raise UsageError(f"disc_input must be 'concat' or 'forward', got {self.disc_input!r}")

    def model_config(self) -> ModelConfig:
        names = {f.name for f in dataclasses.fields(ModelConfig)}
        return ModelConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def loss_weights(self) -> LossWeights:
        return LossWeights(coverage=self.coverage, adversarial=self.adv_weight, use_adversarial=self.adversarial)

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)

    # flat key = value text form

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict[str, str], base: "TrainingConfig | None" = None) -> "TrainingConfig":
        """Build from string values keyed by field name, on top of ``base``."""
        base = base or cls()
        kinds = {f.name: type(getattr(base, f.name)) for f in dataclasses.fields(cls)}
        changes = {}
        for key, raw in values.items():
            if key not in kinds:
                raise UsageError(f"unknown config key {key!r}")
            changes[key] = _convert(key, str(raw).strip(), kinds[key])
        return dataclasses.replace(base, **changes)


def _convert(key: str, raw: str, kind: type):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is tuple:
            return tuple(int(x) for x in raw.split(","))
        return kind(raw)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path, overrides: dict[str, str] | None = None) -> TrainingConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    values: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(path)))
    values.update(overrides or {})
    return TrainingConfig.from_mapping(values)


# ------------------------------------------------------------------ checkpoints

@dataclass(frozen=True)
class Checkpoint:
    snapshot: object
    accuracy: float
    distance: float


@dataclass(frozen=True)
class CheckpointSet:
    best_accuracy: Checkpoint | None = None
    best_levenshtein: Checkpoint | None = None
    both_improved: Checkpoint | None = None

    def slots(self) -> dict[str, Checkpoint | None]:
        return {"acc": self.best_accuracy, "lev": self.best_levenshtein, "both": self.both_improved}

    @property
    def empty(self) -> bool:
        return self.best_accuracy is None


def update_checkpoints(cs: CheckpointSet, p, dev_acc: float, dev_lev: float) -> CheckpointSet:
    """Replace slots on strict improvement; ties keep the older snapshot.

    ``p`` only needs a ``snapshot()`` method, called at most once.
    """
    acc_new = cs.best_accuracy is None or dev_acc > cs.best_accuracy.accuracy
    lev_new = cs.best_levenshtein is None or dev_lev < cs.best_levenshtein.distance
    b = cs.both_improved
    both_new = b is None or (dev_acc > b.accuracy and dev_lev < b.distance)
    if not (acc_new or lev_new or both_new):
        return cs
    ck = Checkpoint(p.snapshot(), dev_acc, dev_lev)
    return CheckpointSet(ck if acc_new else cs.best_accuracy,
                         ck if lev_new else cs.best_levenshtein,
                         ck if both_new else b)


# ------------------------------------------------------------------ optimizer

def apply_sgd(tensors: Iterable[Tensor], lr: float, clip_norm: float = 0.0) -> float:
    """``w -= lr * grad`` for every tensor, then clear gradients.

    When the global gradient norm exceeds ``clip_norm`` (> 0) every
    gradient is scaled down to that norm first.  Returns the unclipped norm.
    """
    tensors = list(tensors)
    sq = 0.0
    for t in tensors:
        s = float(np.vdot(t.grad, t.grad))
        if not np.isfinite(s):
            raise NumericError(f"non-finite gradient in parameter {t.name or '?'}")
        sq += s
    norm = float(np.sqrt(sq))
    factor = lr
    if clip_norm > 0 and norm > clip_norm:
        factor = lr * clip_norm / norm
    for t in tensors:
        if factor:
            t.value -= factor * t.grad
        t.zero_grad()
    return norm


def sgd_step(p: ModelParams, lr: float, batch: Sequence[Example], weights: LossWeights = LossWeights(),
             teacher_forcing_prob: float = 1.0, rng: np.random.Generator | None = None,
             adversarial: bool | None = None, clip_norm: float = 0.0) -> float:
    """One update on the summed loss of ``batch``; returns the loss value."""
    b = make_batch(batch, p.vocab)
    with ad.Tape() as tape:
        loss, _ = batch_loss(b, p, weights, teacher_forcing_prob, rng, adversarial)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss {value}")
        tape.backward(loss)
    apply_sgd(p, lr, clip_norm)
    return value


# ------------------------------------------------------------------ state

@dataclass
class LogRow:
    phase: int
    epoch: int
    lr: float
    train_loss: float
    dev_acc: float | None
    dev_lev: float | None
    decayed: bool

    def format(self) -> str:
        acc = "-" if self.dev_acc is None else f"{self.dev_acc:.4f}"
        lev = "-" if self.dev_lev is None else f"{self.dev_lev:.4f}"
        return "\t".join([str(self.phase), str(self.epoch), f"{self.lr:.6g}", f"{self.train_loss:.6f}",
                          acc, lev, "yes" if self.decayed else "no"])


@dataclass
class TrainState:
    """Everything the phases share: parameters, schedule, checkpoints, log."""
    params: ModelParams
    config: TrainingConfig
    dev: list[Example]
    lr: float = 0.0
    best_dev_acc: float = -1.0
    stale_epochs: int = 0
    checkpoints: CheckpointSet = field(default_factory=CheckpointSet)
    rows: list[LogRow] = field(default_factory=list)
    on_epoch: Callable[[LogRow], None] | None = None

    def __post_init__(self):
        if not self.lr:
            self.lr = self.config.lr

    def record(self, row: LogRow) -> None:
        self.rows.append(row)
        log.info("epoch %s", row.format())
        if self.on_epoch is not None:
            self.on_epoch(row)

    def evaluate_dev(self) -> tuple[float, float]:
        preds = decode(self.dev, [self.params], batch_size=self.config.eval_batch_size)
        gold = [e.form for e in self.dev]
        forms = [pr.form for pr in preds]
        return exact_match_accuracy(forms, gold), mean_levenshtein(forms, gold)

    def end_epoch(self, phase: int, epoch: int, train_loss: float) -> LogRow:
        """Dev evaluation, checkpoint update and learning-rate schedule."""
        acc, lev = self.evaluate_dev()
        self.checkpoints = update_checkpoints(self.checkpoints, self.params, acc, lev)
        lr_used = self.lr
        if acc > self.best_dev_acc:
            self.best_dev_acc = acc
            self.stale_epochs = 0
        else:
            self.stale_epochs += 1
        decayed = self.stale_epochs >= self.config.decay_patience
        if decayed:
            self.lr *= self.config.lr_decay
        row = LogRow(phase, epoch, lr_used, train_loss, acc, lev, decayed)
        self.record(row)
        return row


def _run_epoch(state: TrainState, items: Sequence[Example], batch_size: int, **step_kw) -> float:
    """SGD over ``items`` in order; mean loss per item."""
    cfg = state.config
    total = 0.0
    for start in range(0, len(items), batch_size):
        total += sgd_step(state.params, state.lr, items[start:start + batch_size], cfg.loss_weights(),
                          clip_norm=cfg.clip_norm, **step_kw)
    return total / max(1, len(items))


def _shuffled(items: Sequence[Example], rng: np.random.Generator) -> list[Example]:
    return [items[i] for i in rng.permutation(len(items))]


# ------------------------------------------------------------------ phase 1

def warmup_items(train: Sequence[Example]) -> list[Example]:
    """Original triples followed by both copy triples of each."""
    items = list(train)
    for e in train:
        items.extend(make_copy_triples(e))
    return items


def copy_eval_sample(train: Sequence[Example], size: int, seed: int) -> list[Example]:
    copies = [c for e in train for c in make_copy_triples(e)]
    if len(copies) <= size:
        return copies
    rng = stream(seed, "copy_eval")
    return [copies[i] for i in sorted(rng.choice(len(copies), size=size, replace=False))]


def copy_accuracy(p: ModelParams, copies: Sequence[Example], batch_size: int = 64) -> float:
    preds = decode(copies, [p], batch_size=batch_size)
    return exact_match_accuracy([pr.form for pr in preds], [e.form for e in copies])


def copy_attention_offset(p: ModelParams, copies: Sequence[Example]) -> float:
    """Mean ``|argmax_n alpha_x(k, n) - k|`` over the character steps of
    teacher-forced copy tasks; 0 for perfectly diagonal attention."""
    total, count = 0.0, 0
    with ad.no_tape():
        for start in range(0, len(copies), 64):
            chunk = copies[start:start + 64]
            b = make_batch(chunk, p.vocab)
            _, info = batch_loss(b, p, LossWeights(coverage=0.0, use_adversarial=False))
            for i, e in enumerate(chunk):
                K = len(e.form)
                arg = info.alpha_x[i, :K, :len(e.lemma)].argmax(axis=-1)
                total += np.abs(arg - np.arange(K)).sum()
                count += K
    return total / max(1, count)


def phase1_warmup(train: Sequence[Example], state: TrainState, rng: np.random.Generator) -> int:
    """Copy-task warm-up; returns the number of epochs used."""
    if not train:
        raise UsageError("phase 1 needs training data")
    cfg = state.config
    items = warmup_items(train)
    probe = copy_eval_sample(train, cfg.copy_eval_size, cfg.seed)
    for epoch in range(1, cfg.max_epochs[0] + 1):
        loss = _run_epoch(state, _shuffled(items, rng), cfg.batch_sizes[0], adversarial=False)
        acc = copy_accuracy(state.params, probe, cfg.eval_batch_size)
        state.record(LogRow(1, epoch, state.lr, loss, acc, None, False))
        if acc > cfg.warmup_copy_threshold:
            return epoch
    return cfg.max_epochs[0]


# ------------------------------------------------------------------ phase 2

def phase2_pool(high: Sequence[Example], low: Sequence[Example], hall: Sequence[Example],
                rng: np.random.Generator) -> list[Example]:
    """high + low + hall, with low up-sampled to |high| when there is no
    hallucinated data and high is the larger set."""
    if not low:
        raise UsageError("phase 2 needs low-resource data")
    low_part = list(low)
    if not hall and high and len(high) > len(low):
        low_part = upsample(low, len(high), rng)
    return list(high) + low_part + list(hall)


def interpose_copies(order: Sequence[Example], pool: Sequence[Example], prob: float,
                     rng: np.random.Generator) -> list[Example]:
    """Before each item, with probability ``prob``, insert one of the two
    copy triples of a uniformly drawn pool example."""
    out = []
    flips = rng.random(len(order)) < prob
    for item, flip in zip(order, flips):
        if flip:
            src = pool[int(rng.integers(len(pool)))]
            out.append(make_copy_triples(src)[int(rng.integers(2))])
        out.append(item)
    return out


def phase2_crosslingual(high: Sequence[Example], low: Sequence[Example], hall: Sequence[Example],
                        state: TrainState, rng: np.random.Generator) -> None:
    cfg = state.config
    pool = phase2_pool(high, low, hall, stream(cfg.seed, "upsample"))
    copy_rng = stream(cfg.seed, "copy_mix")
    for epoch in range(1, cfg.max_epochs[1] + 1):
        items = interpose_copies(_shuffled(pool, rng), pool, cfg.phase2_copy_prob, copy_rng)
        loss = _run_epoch(state, items, cfg.batch_sizes[1], adversarial=cfg.adversarial)
        state.end_epoch(2, epoch, loss)


# ------------------------------------------------------------------ phase 3

def phase3_finetune(low: Sequence[Example], state: TrainState, rng: np.random.Generator) -> None:
    if not low:
        raise UsageError("phase 3 needs low-resource data")
    if any(e.is_copy_task for e in low):
        raise UsageError("phase 3 takes no copy tasks")
    cfg = state.config
    sampling_rng = stream(cfg.seed, "sampling")
    for epoch in range(1, cfg.max_epochs[2] + 1):
        loss = _run_epoch(state, _shuffled(low, rng), cfg.batch_sizes[2], adversarial=False,
                          teacher_forcing_prob=cfg.phase3_sample_prob, rng=sampling_rng)
        state.end_epoch(3, epoch, loss)


# ------------------------------------------------------------------ pipeline

@dataclass
class TrainResult:
    state: TrainState
    vocab: Vocabulary
    hallucinated: list[Example]
    warmup_epochs: int
    seconds: float

    @property
    def checkpoints(self) -> CheckpointSet:
        return self.state.checkpoints

    def models(self) -> list[ModelParams]:
        """The three checkpoint snapshots as independent parameter sets."""
        out = []
        for ck in self.checkpoints.slots().values():
            m = self.state.params.copy()
            m.load_snapshot(ck.snapshot)
            out.append(m)
        return out


def train(high: Sequence[Example], low: Sequence[Example], dev: Sequence[Example], cfg: TrainingConfig,
          *, workers: int = 1, on_epoch: Callable[[LogRow], None] | None = None) -> TrainResult:
    """Hallucinate (optionally), build the vocabulary, and run phases 1-3."""
    if not low:
        raise UsageError("no low-resource training data")
    if not dev:
        raise UsageError("no dev data")
    for name, data in (("high", high), ("low", low), ("dev", dev)):
        if any(e.form is None for e in data):
            raise DataError(f"{name} data has examples without a form")
    t0 = time.perf_counter()
    low_lang = low[0].language_id
    vocab = build_vocab([high, low, dev])
    hall: list[Example] = []
    if cfg.hallucinate:
        hall = hallucinate_dataset(low, vocab.alphabet(low_lang), cfg.hallucinate, cfg.seed, cfg.min_stem, workers)
    params = ModelParams.init(cfg.model_config(), vocab, stream(cfg.seed, "init"))
    state = TrainState(params, cfg, list(dev), on_epoch=on_epoch)
    shuffle_rng = stream(cfg.seed, "shuffle")
    used = 0
    if cfg.max_epochs[0]:
        used = phase1_warmup(low, state, shuffle_rng)
    phase2_crosslingual(high, low, hall, state, shuffle_rng)
    phase3_finetune(low, state, shuffle_rng)
    if state.checkpoints.empty:
        # no dev evaluation happened (both later budgets are zero)
        state.checkpoints = update_checkpoints(state.checkpoints, params, *state.evaluate_dev())
    return TrainResult(state, vocab, hall, used, time.perf_counter() - t0)


def write_run(out_dir, result: TrainResult) -> None:
    """Checkpoints ``model.acc``/``.lev``/``.both``, ``train.log`` and ``config.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.state.config
    cfg_text = cfg.to_text()
    meta = {"config_hash": serialize.config_hash(cfg_text), "seed": cfg.seed}
    for slot, m in zip(SLOTS, result.models()):
        ck = result.checkpoints.slots()[slot]
        serialize.save(out / f"model.{slot}", m, dict(meta, slot=slot, dev_acc=ck.accuracy, dev_lev=ck.distance))
    (out / "train.log").write_text(
        "\t".join(LOG_COLUMNS) + "\n" + "".join(r.format() + "\n" for r in result.state.rows), encoding="utf-8")
    (out / "config.txt").write_text(cfg_text, encoding="utf-8")


def load_run(model_dir, ensemble: bool = True) -> list[ModelParams]:
    """The three checkpoints of a run (or just ``model.acc``)."""
    d = Path(model_dir)
    slots = SLOTS if ensemble else ("acc",)
    models = []
    for slot in slots:
        path = d / f"model.{slot}"
        if not path.exists():
            raise DataError(f"missing checkpoint {path}")
        models.append(serialize.load(path)[0])
    return models
