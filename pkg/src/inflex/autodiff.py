"""Small define-by-run reverse-mode autodiff over float64 numpy arrays.

Every forward op executed while a :class:`Tape` is active (and at least one
input requires a gradient) is appended to that tape together with a local
backward rule.  ``Tape.backward`` replays the record in exact reverse order.

Outside any tape the same functions just compute values, which is what the
decoders use at inference time.
"""
from __future__ import annotations

import contextvars
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, UsageError

__all__ = [
    "Tensor", "Tape", "apply", "grad_check", "no_tape",
    "matmul", "add", "sub", "mul", "concat", "stack", "tanh", "sigmoid",
    "softmax", "sum", "l2_norm", "pick_row", "logloss", "scale",
    "grad_reverse", "index", "transpose", "weighted_sum", "additive_scores",
    "lstm_cell", "cross_entropy", "markov_window", "linear", "unstack",
]

_active: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("inflex_tape", default=None)


class Tensor:
    """Dense float64 array with an optional accumulated gradient."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_from_op")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = np.zeros_like(self.value) if requires_grad else None
        self._from_op = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad.fill(0.0)

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731
    __matmul__ = lambda self, other: matmul(self, other)  # noqa: E731


class _Node:
    __slots__ = ("kind", "inputs", "outputs", "backward")

    def __init__(self, kind, inputs, outputs, backward):
        self.kind = kind
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


class Tape:
    """Ordered record of executed ops.

    Use as a context manager; ops run inside the block are recorded here.
    ``backward`` may be called more than once: leaf gradients accumulate,
    so two calls on the same tape give exactly twice the gradient.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.reset(self._token)
        self._token = None

    def record(self, kind, inputs, outputs, backward) -> None:
        self.nodes.append(_Node(kind, inputs, outputs, backward))

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.requires_grad and not loss._from_op:
            loss.grad += 1.0
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        # weight gradients of 2-D leaves used in matmuls are gathered and
        # reduced with one product per weight at the end
        self._deferred: dict[int, tuple[Tensor, list, list]] = {}
        for node in reversed(self.nodes):
            gouts = [grads.pop(id(o), None) for o in node.outputs]
            if all(g is None for g in gouts):
                continue
            if len(gouts) > 1:
                gouts = [np.zeros_like(o.value) if g is None else g for g, o in zip(gouts, node.outputs)]
            gins = node.backward(*gouts)
            for t, g in zip(node.inputs, gins):
                if g is None or not t.requires_grad:
                    continue
                if not t._from_op:
                    t.grad += g
                    continue
                key = id(t)
                prev = grads.get(key)
                grads[key] = g if prev is None else prev + g
        for w, xs, gs in self._deferred.values():
            w.grad += np.concatenate(xs).T @ np.concatenate(gs)
        self._deferred = {}

    def _defer(self, w: Tensor, x: np.ndarray, g: np.ndarray) -> None:
        entry = self._deferred.get(id(w))
        if entry is None:
            self._deferred[id(w)] = (w, [x], [g])
        else:
            entry[1].append(x)
            entry[2].append(g)


class no_tape:
    """Suspend recording (inference, evaluation)."""

    def __enter__(self):
        self._token = _active.set(None)

    def __exit__(self, *exc):
        _active.reset(self._token)


def _const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(kind: str, inputs: Sequence[Tensor], values, backward: Callable):
    """Wrap forward values into output tensors and record the node if needed."""
    single = not isinstance(values, tuple)
    vals = (values,) if single else values
    tape = _active.get()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    outs = []
    for v in vals:
        out = Tensor.__new__(Tensor)
        out.value = v
        out.requires_grad = needs
        out.grad = None
        out.name = None
        out._from_op = True
        outs.append(out)
    if needs:
        tape.record(kind, tuple(inputs), tuple(outs), backward)
    return outs[0] if single else tuple(outs)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- primitives

def matmul(a, b) -> Tensor:
    a, b = _const(a), _const(b)
    if a.value.ndim == 0 or b.value.ndim == 0 or a.shape[-1] != b.shape[-2 if b.value.ndim > 1 else 0]:
        raise DimensionError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    out = av @ bv
    tape = _active.get()

    def back(g):
        if bv.ndim == 1:
            ga = np.multiply.outer(g, bv) if a.requires_grad else None
            gb = np.tensordot(g, av, axes=(tuple(range(g.ndim)), tuple(range(av.ndim - 1)))) if b.requires_grad else None
            return ga, gb
        ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if bv.ndim == 2:
                x2 = av.reshape(-1, av.shape[-1])
                g2 = g.reshape(-1, g.shape[-1])
                if b._from_op:
                    gb = x2.T @ g2
                else:
                    tape._defer(b, x2, g2)
            else:
                gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return ga, gb

    return _emit("matmul", (a, b), out, back)


def add(a, b) -> Tensor:
    a, b = _const(a), _const(b)
    try:
        out = a.value + b.value
    except ValueError:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None
    sa, sb = a.shape, b.shape
    return _emit("add", (a, b), out, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _const(a), _const(b)
    try:
        out = a.value - b.value
    except ValueError:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None
    sa, sb = a.shape, b.shape
    return _emit("sub", (a, b), out, lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    """Elementwise product with broadcasting."""
    a, b = _const(a), _const(b)
    try:
        out = a.value * b.value
    except ValueError:
        raise DimensionError(f"elementwise_mul: shapes {a.shape} and {b.shape} do not broadcast") from None
    av, bv = a.value, b.value

    def back(g):
        return (_unbroadcast(g * bv, av.shape) if a.requires_grad else None,
                _unbroadcast(g * av, bv.shape) if b.requires_grad else None)

    return _emit("elementwise_mul", (a, b), out, back)


def scale(a, c: float) -> Tensor:
    a = _const(a)
    return _emit("scale", (a,), a.value * c, lambda g: (g * c,))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [_const(x) for x in xs]
    try:
        out = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: shapes {[x.shape for x in xs]} differ off axis {axis}") from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _emit("concat", xs, out, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [_const(x) for x in xs]
    try:
        out = np.stack([x.value for x in xs], axis=axis)
    except ValueError:
        raise DimensionError(f"stack: shapes {[x.shape for x in xs]} differ") from None
    n = len(xs)
    return _emit("stack", xs, out, lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def tanh(a) -> Tensor:
    a = _const(a)
    y = np.tanh(a.value)
    return _emit("tanh", (a,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = _const(a)
    y = 0.5 * (np.tanh(0.5 * a.value) + 1.0)
    return _emit("sigmoid", (a,), y, lambda g: (g * y * (1.0 - y),))


def _softmax_np(z: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(a, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; ``mask`` (bool, broadcastable) drops entries."""
    a = _const(a)
    if a.value.ndim == 0 or a.shape[-1] == 0:
        raise DomainError(f"softmax over an empty axis (shape {a.shape})")
    y = _softmax_np(a.value, mask)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", (a,), y, back)


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors the op name
    a = _const(a)
    shape = a.shape
    out = a.value.sum(axis=axis)

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit("sum", (a,), np.asarray(out), back)


def l2_norm(a, axis=None) -> Tensor:
    """Euclidean norm; the gradient at the origin is taken as zero."""
    a = _const(a)
    av = a.value
    n = np.sqrt((av * av).sum(axis=axis))

    def back(g):
        nn = n if axis is None else np.expand_dims(n, axis)
        gg = g if axis is None else np.expand_dims(g, axis)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(nn > 0, av / np.where(nn > 0, nn, 1.0), 0.0)
        return (gg * r,)

    return _emit("l2_norm", (a,), np.asarray(n), back)


def pick_row(table, ids) -> Tensor:
    """Gather rows ``table[ids]`` (embedding lookup); ``ids`` is any int array."""
    table = _const(table)
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"pick_row: id out of range for table of {table.shape[0]} rows")
    out = table.value[ids]

    def back(g):
        gt = np.zeros_like(table.value)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, *table.shape[1:]))
        return (gt,)

    return _emit("pick_row", (table,), out, back)


def logloss(p, i: int) -> Tensor:
    """-log p[i] for a probability vector ``p``."""
    p = _const(p)
    if p.value.ndim != 1:
        raise DimensionError(f"logloss: expects a vector, got {p.shape}")
    pv = p.value

    def back(g):
        gp = np.zeros_like(pv)
        gp[i] = -g / pv[i]
        return (gp,)

    return _emit("logloss", (p,), np.asarray(-np.log(pv[i])), back)


def grad_reverse(a, lam: float = 1.0) -> Tensor:
    """Identity forward; multiplies the incoming gradient by ``-lam``."""
    a = _const(a)
    return _emit("grad_reverse", (a,), a.value.copy(), lambda g: (-lam * g,))


def index(a, key) -> Tensor:
    """Basic numpy indexing (slices, integers, integer arrays on one axis)."""
    a = _const(a)
    out = a.value[key]

    keys = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (slice, int, np.integer)) for k in keys)

    def back(g):
        ga = np.zeros_like(a.value)
        if basic:
            ga[key] = g
        else:
            np.add.at(ga, key, g)
        return (ga,)

    return _emit("index", (a,), np.array(out), back)


def unstack(a, axis: int = 0) -> tuple[Tensor, ...]:
    """Split along ``axis`` into its slices (inverse of ``stack``)."""
    a = _const(a)
    n = a.shape[axis]
    parts = tuple(np.take(a.value, i, axis=axis) for i in range(n))
    return _emit("unstack", (a,), parts, lambda *gs: (np.stack(gs, axis=axis),))


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = _const(a)
    return _emit("transpose", (a,), np.swapaxes(a.value, -1, -2), lambda g: (np.swapaxes(g, -1, -2),))


def weighted_sum(weights, states) -> Tensor:
    """Attention context: ``sum_j weights[b, j] * states[b, j, :]``."""
    w, s = _const(weights), _const(states)
    if w.shape != s.shape[:-1]:
        raise DimensionError(f"weighted_sum: weights {w.shape} vs states {s.shape}")
    wv, sv = w.value, s.value
    out = np.einsum("...j,...jd->...d", wv, sv)

    def back(g):
        gw = np.einsum("...d,...jd->...j", g, sv) if w.requires_grad else None
        gs = wv[..., None] * g[..., None, :] if s.requires_grad else None
        return gw, gs

    return _emit("weighted_sum", (w, s), out, back)


def _window(pv: np.ndarray) -> np.ndarray:
    out = np.zeros(pv.shape + (3,), dtype=pv.dtype)
    out[..., 1:, 0] = pv[..., :-1]
    out[..., :, 1] = pv
    out[..., :-1, 2] = pv[..., 1:]
    return out


def _window_back(g: np.ndarray) -> np.ndarray:
    gp = g[..., 1].copy()
    gp[..., :-1] += g[..., 1:, 0]
    gp[..., 1:] += g[..., :-1, 2]
    return gp


def additive_scores(keys, query, v, extra=None, *, prev=None, markov=None) -> Tensor:
    """Scores ``v . tanh(keys[b, j] + query[b] + extra[b, j] + markov . window_j(prev[b]))``.

    ``window_j`` is (prev[j-1], prev[j], prev[j+1]) with zero padding and
    ``markov`` a (3, A) matrix; both Markov arguments are optional.
    Output shape (B, J).
    """
    keys, query, v = _const(keys), _const(query), _const(v)
    if keys.shape[-1] != query.shape[-1] or keys.shape[-1] != v.shape[-1]:
        raise DimensionError(f"attend: keys {keys.shape}, query {query.shape}, v {v.shape}")
    pre = keys.value + query.value[..., None, :]
    inputs = [keys, query, v]
    if extra is not None:
        extra = _const(extra)
        if extra.shape != keys.shape:
            raise DimensionError(f"attend: extra term {extra.shape} vs keys {keys.shape}")
        pre = pre + extra.value
        inputs.append(extra)
    use_markov = prev is not None and markov is not None
    if use_markov:
        prev, markov = _const(prev), _const(markov)
        if prev.shape != keys.shape[:-1] or markov.shape != (3, keys.shape[-1]):
            raise DimensionError(f"attend: previous weights {prev.shape}, markov {markov.shape}, keys {keys.shape}")
        win = _window(prev.value)
        pre = pre + win @ markov.value
        inputs += [prev, markov]
    t = np.tanh(pre)
    vv = v.value
    out = t @ vv

    def back(g):
        d = (g[..., None] * vv) * (1.0 - t * t)
        gv = (g[..., None] * t).reshape(-1, t.shape[-1]).sum(axis=0) if v.requires_grad else None
        res = (d, d.sum(axis=-2), gv)
        if extra is not None:
            res += (d,)
        if use_markov:
            gprev = _window_back(d @ markov.value.T) if prev.requires_grad else None
            gm = win.reshape(-1, 3).T @ d.reshape(-1, d.shape[-1]) if markov.requires_grad else None
            res += (gprev, gm)
        return res

    return _emit("additive_scores", inputs, out, back)


def markov_window(prev) -> Tensor:
    """Stack (prev[j-1], prev[j], prev[j+1]) with zero padding: (B, J) -> (B, J, 3)."""
    prev = _const(prev)
    return _emit("markov_window", (prev,), _window(prev.value), lambda g: (_window_back(g),))


def linear(pairs: Sequence[tuple], extra=None) -> Tensor:
    """``sum_i x_i @ W_i (+ extra)`` as a single node; every ``W_i`` is 2-D."""
    pairs = [(_const(x), _const(w)) for x, w in pairs]
    out = None
    for x, w in pairs:
        if w.value.ndim != 2 or x.shape[-1] != w.shape[0]:
            raise DimensionError(f"linear: {x.shape} @ {w.shape}")
        y = x.value @ w.value
        out = y if out is None else out + y
    inputs = [t for pair in pairs for t in pair]
    if extra is not None:
        extra = _const(extra)
        try:
            out = out + extra.value
        except ValueError:
            raise DimensionError(f"linear: extra term {extra.shape} vs output {out.shape}") from None
        inputs.append(extra)
    tape = _active.get()

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        res = []
        for x, w in pairs:
            res.append(g @ w.value.T if x.requires_grad else None)
            gw = None
            if w.requires_grad:
                x2 = x.value.reshape(-1, x.shape[-1])
                if w._from_op:
                    gw = x2.T @ g2
                else:
                    tape._defer(w, x2, g2)
            res.append(gw)
        if extra is not None:
            res.append(_unbroadcast(g, extra.shape))
        return res

    return _emit("linear", inputs, out, back)


def lstm_cell(gates, c_prev, h_prev, mask: np.ndarray | None = None, coupled: bool = True):
    """One LSTM update from precomputed pre-activations.

    ``gates`` holds [input, candidate, output] blocks (coupled: forget =
    1 - input) or [input, forget, candidate, output] blocks (standard).
    Rows where ``mask`` is 0 carry ``h_prev``/``c_prev`` through unchanged.
    Returns ``(h, c)``.
    """
    gates, c_prev, h_prev = _const(gates), _const(c_prev), _const(h_prev)
    H = c_prev.shape[-1]
    gv, cp = gates.value, c_prev.value
    if gv.shape[-1] != (3 if coupled else 4) * H:
        raise DimensionError(f"lstm_cell: gates {gv.shape} do not match state size {H}")
    if coupled:
        i = 0.5 * (np.tanh(0.5 * gv[..., :H]) + 1.0)
        f = 1.0 - i
        u = np.tanh(gv[..., H:2 * H])
        o = 0.5 * (np.tanh(0.5 * gv[..., 2 * H:]) + 1.0)
    else:
        i = 0.5 * (np.tanh(0.5 * gv[..., :H]) + 1.0)
        f = 0.5 * (np.tanh(0.5 * gv[..., H:2 * H]) + 1.0)
        u = np.tanh(gv[..., 2 * H:3 * H])
        o = 0.5 * (np.tanh(0.5 * gv[..., 3 * H:]) + 1.0)
    c = f * cp + i * u
    tc = np.tanh(c)
    h = o * tc
    if mask is not None:
        m = mask[..., None].astype(np.float64)
        h = m * h + (1.0 - m) * h_prev.value
        c = m * c + (1.0 - m) * cp
    else:
        m = None

    def back(gh, gc):
        if m is not None:
            gh_pass, gc_pass = (1.0 - m) * gh, (1.0 - m) * gc
            gh, gc = m * gh, m * gc
        go = gh * tc
        gc_tot = gc + gh * o * (1.0 - tc * tc)
        gu = gc_tot * i
        gcp = gc_tot * f
        if coupled:
            gi = gc_tot * (u - cp)
            gg = np.concatenate([gi * i * (1 - i), gu * (1 - u * u), go * o * (1 - o)], axis=-1)
        else:
            gi = gc_tot * u
            gf = gc_tot * cp
            gg = np.concatenate([gi * i * (1 - i), gf * f * (1 - f), gu * (1 - u * u), go * o * (1 - o)], axis=-1)
        ghp = None
        if m is not None:
            gcp = gcp + gc_pass
            ghp = gh_pass
        return gg, gcp, ghp

    return _emit("lstm_cell", (gates, c_prev, h_prev), (h, c), back)


def cross_entropy(logits, targets, mask: np.ndarray | None = None) -> Tensor:
    """Summed negative log-likelihood of integer ``targets`` under softmax(logits)."""
    logits = _const(logits)
    targets = np.asarray(targets, dtype=np.intp)
    z = logits.value
    if z.shape[:-1] != targets.shape:
        raise DimensionError(f"cross_entropy: logits {z.shape} vs targets {targets.shape}")
    p = _softmax_np(z)
    picked = np.take_along_axis(p, targets[..., None], axis=-1)[..., 0]
    nll = -np.log(picked)
    w = np.ones(targets.shape) if mask is None else mask.astype(np.float64)
    out = np.asarray((nll * w).sum())

    def back(g):
        d = p.copy()
        np.put_along_axis(d, targets[..., None], np.take_along_axis(d, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (g * d * w[..., None],)

    return _emit("cross_entropy", (logits,), out, back)


_KINDS = {
    "matmul": matmul, "add": add, "sub": sub, "elementwise_mul": mul, "concat": concat,
    "stack": stack, "tanh": tanh, "sigmoid": sigmoid, "softmax": softmax, "sum": sum,
    "l2_norm": l2_norm, "pick_row": pick_row, "logloss": logloss, "scale": scale,
    "grad_reverse": grad_reverse, "index": index, "transpose": transpose,
    "weighted_sum": weighted_sum, "additive_scores": additive_scores,
    "markov_window": markov_window, "linear": linear, "unstack": unstack, "lstm_cell": lstm_cell, "cross_entropy": cross_entropy,
}

_LIST_INPUT = {"concat", "stack"}


def apply(op_kind: str, inputs: Sequence, **kwargs):
    """Dispatch by op name, e.g. ``apply("softmax", [z])``."""
    try:
        fn = _KINDS[op_kind]
    except KeyError:
        raise UsageError(f"unknown op kind {op_kind!r}") from None
    if op_kind in _LIST_INPUT:
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


def grad_check(f: Callable[..., Tensor], point, eps: float = 1e-5,
               numeric_f: Callable[..., Tensor] | None = None) -> float:
    """Max relative error between backprop and central differences.

    ``point`` is a Tensor or a list of Tensors (all requiring grad); ``f``
    takes them positionally and must return a scalar Tensor.  Returns
    ``max |a - n| / max(1e-8, |a| + |n|)`` over every coordinate.

    ``numeric_f`` replaces ``f`` on the finite-difference side; it is how a
    gradient that is deliberately not the derivative of ``f`` (gradient
    reversal) gets checked against the objective it does follow.
    """
    params = [point] if isinstance(point, Tensor) else list(point)
    numeric_f = numeric_f or f
    for p in params:
        if not p.requires_grad:
            raise UsageError("grad_check: every point tensor must require grad")
        p.zero_grad()
    with Tape() as tape:
        out = f(*params)
        if out.size != 1:
            raise UsageError(f"grad_check: f must return a scalar, got shape {out.shape}")
        tape.backward(out)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy().reshape(-1)
        flat = p.value.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            with no_tape():
                up = numeric_f(*params).item()
            flat[j] = orig - eps
            with no_tape():
                down = numeric_f(*params).item()
            flat[j] = orig
            num = (up - down) / (2 * eps)
            err = abs(analytic[j] - num) / max(1e-8, abs(analytic[j]) + abs(num))
            worst = max(worst, err)
        p.zero_grad()
    return worst
