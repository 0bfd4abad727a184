"""Differentiable building blocks: dense/gated layers, GRN, LSTM cell,
interpretable multi-head attention, pinball loss, and Adam."""
from __future__ import annotations

import json
import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_FORMAT_VERSION = 1


class ParamStore:
    """Registry of named trainable tensors with seeded initialization."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def parameter(self, name: str, shape: tuple[int, ...], init: str = "glorot") -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} registered twice")
        if init == "glorot":
            fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], shape[0])
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            values = self.rng.uniform(-limit, limit, size=shape)
        elif init == "zeros":
            values = np.zeros(shape)
        elif init == "ones":
            values = np.ones(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(values)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> dict[str, Tensor]:
        return dict(self._params)

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def parameter_count(self) -> int:
        return sum(t.values.size for t in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        if missing:
            raise ValueError(f"missing parameters in state dict: {sorted(missing)[:3]}...")
        for name, t in self._params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != t.values.shape:
                raise ValueError(f"parameter {name!r}: shape {values.shape} != {t.values.shape}")
            t.values = values.copy()

    def to_json(self) -> str:
        doc = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "params": {
                name: {"shape": list(t.values.shape), "values": t.values.reshape(-1).tolist()}
                for name, t in self._params.items()
            },
        }
        return json.dumps(doc)

    def load_json(self, text: str):
        doc = json.loads(text)
        if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
        state = {
            name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in doc["params"].items()
        }
        self.load_state_dict(state)


class Adam:
    """Adam with bias correction; moments keyed by parameter name.

    ``clip_norm`` rescales the global gradient norm before the update
    when it exceeds the threshold.
    """

    def __init__(self, store: ParamStore, lr: float = 0.03, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, clip_norm: float | None = None):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {name: np.zeros_like(t.values) for name, t in store.tensors().items()}
        self.v = {name: np.zeros_like(t.values) for name, t in store.tensors().items()}

    def _clip(self):
        sq = 0.0
        for p in self.store.tensors().values():
            if p.grad is not None:
                sq += float(np.sum(p.grad**2))
        norm = np.sqrt(sq)
        if norm > self.clip_norm and norm > 0:
            scale = self.clip_norm / norm
            for p in self.store.tensors().values():
                if p.grad is not None:
                    p.grad *= scale

    def step(self):
        if self.clip_norm is not None:
            self._clip()
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.store.tensors().items():
            if p.grad is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad**2
            p.values -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, bias: bool = True):
        self.w = store.parameter(f"{name}.w", (n_in, n_out))
        self.b = store.parameter(f"{name}.b", (n_out,), "zeros") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.w)
        return ad.add(y, self.b) if self.b is not None else y


class Glu:
    """Gated linear unit: sigmoid(W_g x + b_g) * (W_v x + b_v)."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int):
        self.gate = Linear(store, f"{name}.gate", n_in, n_out)
        self.value = Linear(store, f"{name}.value", n_in, n_out)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.mul(ad.sigmoid(self.gate(x)), self.value(x))


class Grn:
    """Gated residual network.

    eta2 = ELU(W2 a + W3 c + b2), eta1 = W1 eta2 + b1, and the output
    is LayerNorm(skip(a) + GLU(eta1)) with a learned skip projection
    when the input and output widths differ.
    """

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 hidden: int | None = None, context_size: int | None = None,
                 dropout: float = 0.0):
        hidden = n_out if hidden is None else hidden
        self.dense_in = Linear(store, f"{name}.dense_in", n_in, hidden)
        self.context = (
            Linear(store, f"{name}.context", context_size, hidden, bias=False)
            if context_size
            else None
        )
        self.dense_out = Linear(store, f"{name}.dense_out", hidden, n_out)
        self.glu = Glu(store, f"{name}.glu", n_out, n_out)
        self.skip = Linear(store, f"{name}.skip", n_in, n_out) if n_in != n_out else None
        self.ln_gamma = store.parameter(f"{name}.ln.gamma", (n_out,), "ones")
        self.ln_beta = store.parameter(f"{name}.ln.beta", (n_out,), "zeros")
        self.dropout = dropout

    def __call__(self, x: Tensor, context: Tensor | None = None,
                 training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        pre = self.dense_in(x)
        if context is not None:
            if self.context is None:
                raise ValueError("this GRN was built without a context projection")
            pre = ad.add(pre, self.context(context))
        eta1 = self.dense_out(ad.elu(pre))
        eta1 = ad.dropout(eta1, self.dropout, rng, training)
        skip = self.skip(x) if self.skip is not None else x
        normed = ad.layer_norm(ad.add(skip, self.glu(eta1)))
        return ad.add(ad.mul(normed, self.ln_gamma), self.ln_beta)


class GateAddNorm:
    """LayerNorm(residual + GLU(x)): the gated skip used between blocks."""

    def __init__(self, store: ParamStore, name: str, width: int, dropout: float = 0.0):
        self.glu = Glu(store, f"{name}.glu", width, width)
        self.ln_gamma = store.parameter(f"{name}.ln.gamma", (width,), "ones")
        self.ln_beta = store.parameter(f"{name}.ln.beta", (width,), "zeros")
        self.dropout = dropout

    def __call__(self, x: Tensor, residual: Tensor,
                 training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        x = ad.dropout(x, self.dropout, rng, training)
        normed = ad.layer_norm(ad.add(residual, self.glu(x)))
        return ad.add(ad.mul(normed, self.ln_gamma), self.ln_beta)


class LstmCell:
    """Standard LSTM cell with input/forget/output gates and candidate state."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_hidden: int):
        self.n_hidden = n_hidden
        self.wx = store.parameter(f"{name}.wx", (n_in, 4 * n_hidden))
        self.wh = store.parameter(f"{name}.wh", (n_hidden, 4 * n_hidden))
        self.b = store.parameter(f"{name}.b", (4 * n_hidden,), "zeros")

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        gates = ad.add(ad.add(ad.matmul(x, self.wx), ad.matmul(h, self.wh)), self.b)
        n = self.n_hidden
        i = ad.sigmoid(ad.narrow(gates, -1, 0, n))
        f = ad.sigmoid(ad.narrow(gates, -1, n, n))
        g = ad.tanh(ad.narrow(gates, -1, 2 * n, n))
        o = ad.sigmoid(ad.narrow(gates, -1, 3 * n, n))
        c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_next = ad.mul(o, ad.tanh(c_next))
        return h_next, c_next


def causal_mask(n_query: int, n_key: int, offset: int = 0) -> np.ndarray:
    """Additive bias: 0 where key position <= query position + offset,
    -inf elsewhere.  ``offset`` shifts query positions when queries
    start later in the sequence than the keys."""
    q = np.arange(n_query)[:, None]
    k = np.arange(n_key)[None, :]
    return np.where(k <= q + offset, 0.0, -np.inf)


class InterpretableAttention:
    """Multi-head attention with per-head query/key projections and a
    single shared value projection, so the head-averaged weights
    exactly explain the output."""

    def __init__(self, store: ParamStore, name: str, n_model: int, heads: int,
                 dropout: float = 0.0):
        if heads < 1 or n_model % heads != 0:
            raise ValueError(f"heads must divide the model width ({n_model} % {heads})")
        self.heads = heads
        self.d = n_model // heads
        self.wq = [Linear(store, f"{name}.q{h}", n_model, self.d) for h in range(heads)]
        # no key bias: a constant shift of every key moves each softmax
        # row uniformly, which the softmax cancels, so the parameter
        # would be inert
        self.wk = [Linear(store, f"{name}.k{h}", n_model, self.d, bias=False) for h in range(heads)]
        self.wv = Linear(store, f"{name}.v", n_model, self.d)
        self.out = Linear(store, f"{name}.out", self.d, n_model)
        self.dropout = dropout

    def __call__(self, query: Tensor, keys_values: Tensor, mask: np.ndarray | None = None,
                 training: bool = False, rng: np.random.Generator | None = None
                 ) -> tuple[Tensor, Tensor]:
        """query is (B, Tq, D), keys_values is (B, Tk, D); returns the
        attended output (B, Tq, D) and head-averaged weights (B, Tq, Tk)."""
        v = self.wv(keys_values)
        scale = 1.0 / np.sqrt(self.d)
        weights: Tensor | None = None
        for h in range(self.heads):
            q = self.wq[h](query)
            k = self.wk[h](keys_values)
            scores = ad.mul(ad.matmul(q, ad.swap_last(k)), scale)
            if mask is not None:
                scores = ad.add(scores, mask)
            head_weights = ad.softmax(scores, axis=-1)
            weights = head_weights if weights is None else ad.add(weights, head_weights)
        if self.heads > 1:
            weights = ad.mul(weights, 1.0 / self.heads)
        context = ad.matmul(weights, v)
        context = ad.dropout(context, self.dropout, rng, training)
        return self.out(context), weights


def quantile_loss(y: float, yhat: float, q: float) -> float:
    """Pinball loss max(q*(y - yhat), (q - 1)*(y - yhat))."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must be in (0, 1), got {q}")
    err = y - yhat
    return max(q * err, (q - 1.0) * err)


def pinball(error: Tensor, q: float) -> Tensor:
    """Elementwise pinball loss of a residual tensor (y - yhat)."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must be in (0, 1), got {q}")
    return ad.maximum(ad.mul(error, q), ad.mul(error, q - 1.0))
