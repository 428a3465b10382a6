import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inflex import train as tr
from inflex.autodiff import Tensor
from inflex.corpus import COPY, Example, make_copy_triples
from inflex.errors import DataError, NumericError, UsageError
from inflex.synthetic import make_corpus
from inflex.train import (CheckpointSet, LogRow, TrainingConfig, TrainState, apply_sgd, interpose_copies,
                          load_config, parse_config_text, phase2_pool, update_checkpoints, warmup_items)

from oracles import replay_checkpoints

TINY = TrainingConfig(char_dim=4, tag_dim=3, hidden=5, attention=4, tag_attention=3, disc_hidden=3,
                      max_epochs=(2, 2, 2), copy_eval_size=10)


class Counter:
    """Stand-in for parameters: each snapshot is a fresh integer."""

    def __init__(self):
        self.n = 0

    def snapshot(self):
        self.n += 1
        return self.n


# ---------------------------------------------------------------- config

def test_config_defaults():
    c = TrainingConfig()
    assert (c.lr, c.lr_decay, c.decay_patience) == (0.1, 0.5, 6)
    assert c.max_epochs == (20, 40, 40) and c.batch_sizes == (10, 10, 1)
    assert (c.warmup_copy_threshold, c.phase2_copy_prob, c.phase3_sample_prob) == (0.75, 0.30, 0.5)
    assert (c.coverage, c.adv_weight) == (0.1, 1.0)


@pytest.mark.parametrize("bad", [dict(phase2_copy_prob=1.5), dict(batch_sizes=(10, 0, 1)), dict(decay_patience=0),
                                 dict(max_epochs=(1, 2)), dict(disc_input="sideways"), dict(lr_decay=0.0)])
def test_config_rejects_invalid_values(bad):
    with pytest.raises(UsageError):
        TrainingConfig(**bad)


def test_config_text_round_trip():
    c = TrainingConfig(max_epochs=(3, 4, 5), adversarial=False, lr=0.05)
    assert TrainingConfig.from_mapping(parse_config_text(c.to_text())) == c


def test_config_precedence_file_then_overrides(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("# comment\nlr = 0.2\n\nseed = 7  # trailing\nmarkov = off\n", encoding="utf-8")
    c = load_config(path, {"seed": "9"})
    assert (c.lr, c.seed, c.markov) == (0.2, 9, False)
    assert c.hidden == 100


@pytest.mark.parametrize("text", ["lr 0.2", "nope = 1", "lr = fast", "max_epochs = 1,x,3", "markov = maybe"])
def test_config_errors(tmp_path, text):
    path = tmp_path / "cfg.txt"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(UsageError):
        load_config(path)


def test_missing_config_file_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        load_config(tmp_path / "absent.txt")


def test_model_config_and_loss_weights_come_from_training_config():
    c = TrainingConfig(hidden=7, coupled_lstm=False, coverage=0.3, adversarial=False)
    assert c.model_config().hidden == 7 and not c.model_config().coupled_lstm
    w = c.loss_weights()
    assert w.coverage == 0.3 and not w.use_adversarial


# ---------------------------------------------------------------- checkpoints

def test_first_evaluation_fills_all_slots():
    cs = update_checkpoints(CheckpointSet(), Counter(), 0.5, 2.0)
    assert cs.best_accuracy is cs.best_levenshtein is cs.both_improved


def test_accuracy_up_distance_up_replaces_only_accuracy_slot():
    c = Counter()
    cs = update_checkpoints(CheckpointSet(), c, 0.5, 2.0)
    cs = update_checkpoints(cs, c, 0.6, 2.5)
    assert cs.best_accuracy.snapshot == 2
    assert cs.best_levenshtein.snapshot == 1 and cs.both_improved.snapshot == 1


def test_ties_keep_older_snapshot_and_skip_snapshotting():
    c = Counter()
    cs = update_checkpoints(CheckpointSet(), c, 0.5, 2.0)
    cs2 = update_checkpoints(cs, c, 0.5, 2.0)
    assert cs2 is cs and c.n == 1


def test_checkpoints_agree_with_replay_oracle_on_random_sequences():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 12))
        # coarse grids so ties are common
        history = [(float(rng.integers(0, 5)) / 4, float(rng.integers(0, 5)) / 2) for _ in range(n)]
        cs, c = CheckpointSet(), Counter()
        ids = []
        for acc, lev in history:
            cs = update_checkpoints(cs, c, acc, lev)
            ids.append(c.n)
        got = [cs.best_accuracy.snapshot, cs.best_levenshtein.snapshot, cs.both_improved.snapshot]
        want = [ids[k] for k in replay_checkpoints(history)]
        assert got == want


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 10)), min_size=1, max_size=20))
def test_checkpoint_scores_are_monotone(history):
    cs, c = CheckpointSet(), Counter()
    prev = None
    for acc, lev in history:
        cs = update_checkpoints(cs, c, acc, lev)
        if prev is not None:
            assert cs.best_accuracy.accuracy >= prev.best_accuracy.accuracy
            assert cs.best_levenshtein.distance <= prev.best_levenshtein.distance
        prev = cs


# ---------------------------------------------------------------- optimizer

def square_grad(w):
    w.grad[...] = 2 * w.value


def test_sgd_closed_form_on_w_squared():
    w = Tensor(1.0, requires_grad=True)
    square_grad(w)
    norm = apply_sgd([w], 0.1)
    assert w.value == 0.8 and norm == 2.0 and w.grad == 0.0


def test_sgd_with_zero_learning_rate_leaves_weights():
    w = Tensor([1.0, -2.0], requires_grad=True)
    square_grad(w)
    apply_sgd([w], 0.0)
    assert w.value.tolist() == [1.0, -2.0] and not w.grad.any()


def test_sgd_clips_global_norm():
    a, b = Tensor(3.0, requires_grad=True), Tensor(4.0, requires_grad=True)
    a.grad[...], b.grad[...] = 3.0, 4.0
    assert apply_sgd([a, b], 1.0, clip_norm=1.0) == 5.0
    assert np.isclose(a.value, 3.0 - 0.6) and np.isclose(b.value, 4.0 - 0.8)


def test_non_finite_gradient_names_the_parameter():
    w = Tensor([1.0], requires_grad=True, name="dec_Wh")
    w.grad[0] = np.nan
    with pytest.raises(NumericError, match="dec_Wh"):
        apply_sgd([w], 0.1)


def test_sgd_step_is_bitwise_reproducible():
    data = make_corpus(6, seed=2)
    out = []
    for _ in range(2):
        from inflex.corpus import build_vocab
        from inflex.model import ModelParams
        p = ModelParams.init(TINY.model_config(), build_vocab([data]), np.random.default_rng(1))
        tr.sgd_step(p, 0.1, data, TINY.loss_weights())
        out.append(p.snapshot())
    assert all(np.array_equal(out[0][k], out[1][k]) for k in out[0])


# ---------------------------------------------------------------- schedule

class Scripted(TrainState):
    """Dev metrics come from a list instead of decoding."""

    script: list = []

    def evaluate_dev(self):
        return self.script.pop(0)


def run_schedule(accs, patience=2):
    cfg = TINY.replace(decay_patience=patience)
    st_ = Scripted(Counter(), cfg, [])
    st_.script = [(a, 1.0 - a) for a in accs]
    return [st_.end_epoch(2, i + 1, 0.0) for i in range(len(accs))], st_


def test_learning_rate_decays_after_patience_and_keeps_decaying_while_stale():
    rows, state = run_schedule([0.5, 0.4, 0.4, 0.4, 0.6, 0.6])
    assert [r.lr for r in rows] == [0.1, 0.1, 0.1, 0.05, 0.025, 0.025]
    assert [r.decayed for r in rows] == [False, False, True, True, False, False]
    assert state.lr == 0.025 and state.stale_epochs == 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([0.1, 0.2, 0.3, 0.4]), min_size=1, max_size=25), st.integers(1, 6))
def test_learning_rate_sequence_is_non_increasing_halving(accs, patience):
    rows, _ = run_schedule(accs, patience)
    lrs = [r.lr for r in rows]
    best, stale = -1.0, 0
    for prev, cur, acc, row in zip(lrs, lrs[1:], accs, rows):
        assert cur in (prev, prev * 0.5)
        # independent recount of the stale streak that allowed a halving
        stale = 0 if acc > best else stale + 1
        best = max(best, acc)
        assert (cur < prev) == (stale >= patience) == row.decayed


def test_log_row_format():
    row = LogRow(1, 3, 0.1, 1.23456789, 0.5, None, False)
    assert row.format() == "1\t3\t0.1\t1.234568\t0.5000\t-\tno"


# ---------------------------------------------------------------- item streams

def test_five_examples_give_fifteen_warmup_items():
    data = make_corpus(5, seed=1)
    items = warmup_items(data)
    assert len(items) == 15
    assert sum(e.is_copy_task for e in items) == 10
    assert sum(COPY in e.tags for e in items) == 5


def test_copy_fraction_over_ten_seeds():
    pool = make_corpus(50, seed=3)
    order = pool * 40
    for seed in range(10):
        items = interpose_copies(order, pool, 0.30, np.random.default_rng(seed))
        frac = sum(e.is_copy_task for e in items) / len(items)
        assert abs(frac - 0.30 / 1.30) < 0.02
        assert [e for e in items if not e.is_copy_task] == order


def test_interposed_copies_come_from_the_pool():
    pool = make_corpus(4, seed=3)
    allowed = {c for e in pool for c in make_copy_triples(e)}
    items = interpose_copies(pool * 10, pool, 0.5, np.random.default_rng(0))
    assert {e for e in items if e.is_copy_task} <= allowed


def test_pool_upsamples_low_to_high_without_hallucination():
    high = [Example(f"h{i}", ("N",), f"h{i}s", "hi") for i in range(10000)]
    low = make_corpus(100, seed=4)
    pool = phase2_pool(high, low, [], np.random.default_rng(0))
    assert len(pool) == 20000
    assert all(pool[10000:].count(e) == 100 for e in low[:5])


def test_pool_with_hallucination_keeps_low_as_is():
    low = make_corpus(100, seed=4)
    hall = [e.replace(is_hallucinated=True) for e in make_corpus(300, seed=5)]
    assert phase2_pool([], low, hall, np.random.default_rng(0)) == low + hall
    high = make_corpus(1000, seed=6, language_id="hi")
    assert len(phase2_pool(high, low, hall, np.random.default_rng(0))) == 1400
    with pytest.raises(UsageError):
        phase2_pool(high, [], hall, np.random.default_rng(0))


def record_steps(monkeypatch):
    seen = []
    real = tr.sgd_step

    def spy(p, lr, batch, *a, **kw):
        seen.append((list(batch), kw))
        return real(p, lr, batch, *a, **kw)

    monkeypatch.setattr(tr, "sgd_step", spy)
    return seen


def test_phase3_stream_is_low_only_single_items_with_sampling(monkeypatch):
    high = make_corpus(8, seed=7, language_id="hi")
    low = make_corpus(6, seed=8)
    dev = make_corpus(3, seed=9)
    seen = record_steps(monkeypatch)
    tr.train(high, low, dev, TINY.replace(max_epochs=(0, 0, 2)))
    assert len(seen) == 12
    for batch, kw in seen:
        assert len(batch) == 1 and batch[0] in low and not batch[0].is_copy_task
        assert kw["teacher_forcing_prob"] == 0.5 and kw["adversarial"] is False


def test_phase3_rejects_copy_tasks():
    data = make_corpus(3, seed=1)
    state = TrainState(Counter(), TINY, data)
    with pytest.raises(UsageError):
        tr.phase3_finetune(data + [make_copy_triples(data[0])[0]], state, np.random.default_rng(0))


def test_phase1_runs_without_discriminator(monkeypatch):
    low = make_corpus(5, seed=8)
    high = make_corpus(5, seed=1, language_id="hi")
    seen = record_steps(monkeypatch)
    tr.train(high, low, low, TINY.replace(max_epochs=(1, 1, 0), warmup_copy_threshold=1.0))
    phase1, phase2 = seen[:2], seen[2:]
    assert sum(len(b) for b, _ in phase1) == 15
    assert all(kw["adversarial"] is False for _, kw in phase1)
    assert all(kw["adversarial"] is True for _, kw in phase2)


# ---------------------------------------------------------------- end to end

def tiny_run(seed=0, **changes):
    low = make_corpus(8, seed=11)
    dev = make_corpus(4, seed=12)
    return tr.train([], low, dev, TINY.replace(seed=seed, hallucinate=20, **changes))


def test_training_is_deterministic():
    a, b = tiny_run(), tiny_run()
    assert [r.format() for r in a.state.rows] == [r.format() for r in b.state.rows]
    assert a.hallucinated == b.hallucinated
    for x, y in zip(a.models(), b.models()):
        assert all(np.array_equal(u.value, v.value) for u, v in zip(x, y))
    c = tiny_run(seed=1)
    assert not np.array_equal(c.state.params["E_char"].value, a.state.params["E_char"].value)


def test_full_teacher_forcing_in_phase3_matches_plain_training():
    a = tiny_run(phase3_sample_prob=1.0)
    b = tiny_run(phase3_sample_prob=1.0)
    assert all(np.array_equal(u.value, v.value) for u, v in zip(a.state.params, b.state.params))


def test_log_has_one_row_per_epoch_and_phase_columns():
    res = tiny_run(warmup_copy_threshold=1.0)
    phases = [r.phase for r in res.state.rows]
    assert phases == [1, 1, 2, 2, 3, 3]
    assert res.state.rows[0].dev_lev is None and res.state.rows[2].dev_lev is not None


def test_write_and_load_run(tmp_path):
    res = tiny_run()
    tr.write_run(tmp_path, res)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["config.txt", "model.acc", "model.both", "model.lev", "train.log"]
    header = (tmp_path / "train.log").read_text().splitlines()[0]
    assert header.split("\t") == list(tr.LOG_COLUMNS)
    assert TrainingConfig.from_mapping(parse_config_text((tmp_path / "config.txt").read_text())) == res.state.config
    assert len(tr.load_run(tmp_path)) == 3 and len(tr.load_run(tmp_path, ensemble=False)) == 1
    (tmp_path / "model.lev").unlink()
    with pytest.raises(DataError):
        tr.load_run(tmp_path)


def test_train_input_errors():
    low = make_corpus(3, seed=1)
    with pytest.raises(UsageError):
        tr.train([], [], low, TINY)
    with pytest.raises(UsageError):
        tr.train([], low, [], TINY)
    with pytest.raises(DataError):
        tr.train([], low, [low[0].replace(form=None)], TINY)
