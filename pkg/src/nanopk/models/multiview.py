"""Cross-attention multi-view network and the plain MLP baseline.

Data flow of :class:`MultiviewNet` (batch size ``B``)::

    x  (B, d)  --Dense_k--> (B, tk, m) = K
    xt (B, 16) --Dense_q--> (B, tq, m) = Q
    xt (B, 16) --Dense_v--> (B, tk, m) = V
    softmax(Q K^T / sqrt(m)) V -> layer norm -> dropout -> flatten -> batch norm
    concat(x, xt) -> aux MLP
    concat(attention branch, aux branch) -> four head MLPs -> (B, 4)

The ``primary`` and ``secondary`` views route a single input into every
projection and the aux branch; the other input is then never read.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from ..autodiff import (
    Linear,
    ParamStore,
    Tensor,
    batch_norm,
    concat,
    dropout,
    layer_norm,
    no_grad,
    scaled_dot_attention,
)
from ..autodiff.optim import LEARNING_RATE_GRID
from ..errors import BadConfig, ShapeMismatch

N_OUTPUTS = 4
SECONDARY_DIM = 16
VIEWS = ("multiview", "primary", "secondary")

# Ranges the hyperparameter search draws from.
RANGES = {
    "hidden_units": (64, 256),
    "aux_mlp_layers": (1, 3),
    "attn_dropout": (0.2, 0.4),
    "mlp_dropout": (0.1, 0.3),
    "head_layers": ((1, 3), (1, 3), (1, 3), (1, 5)),
}


@dataclass(frozen=True)
class MultiviewConfig:
    hidden_units: int = 128
    aux_mlp_layers: int = 2
    tokens_q: int = 4
    tokens_k: int = 4
    d_model: int | None = None  # defaults to hidden_units // 4
    attn_dropout: float = 0.3
    mlp_dropout: float = 0.2
    # hidden layers per head: KTRESmax, KTRESn, KTRES50, KTRESrelease
    head_layers: tuple[int, int, int, int] = (2, 2, 2, 3)
    head_l2: float = 0.02
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 50
    seed: int = 0
    view: str = "multiview"
    bn_momentum: float = 0.1
    norm_eps: float = 1e-5

    @property
    def model_dim(self) -> int:
        return self.d_model if self.d_model is not None else max(1, self.hidden_units // 4)

    def validate(self) -> None:
        ints = {
            "hidden_units": self.hidden_units,
            "aux_mlp_layers": self.aux_mlp_layers,
            "tokens_q": self.tokens_q,
            "tokens_k": self.tokens_k,
            "model_dim": self.model_dim,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
        }
        for name, value in ints.items():
            if int(value) != value or value < 1:
                raise BadConfig(f"{name} must be a positive integer, got {value}")
        if self.patience < 0:
            raise BadConfig("patience must be >= 0")
        if len(self.head_layers) != N_OUTPUTS or any(h < 1 for h in self.head_layers):
            raise BadConfig("need four heads with at least one hidden layer each")
        for name in ("attn_dropout", "mlp_dropout"):
            rate = getattr(self, name)
            if not 0 <= rate < 1:
                raise BadConfig(f"{name} must be in [0, 1), got {rate}")
        if self.head_l2 < 0:
            raise BadConfig("head_l2 must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise BadConfig(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise BadConfig("learning_rate must be positive")
        if self.view not in VIEWS:
            raise BadConfig(f"view must be one of {VIEWS}, got {self.view!r}")

    def range_violations(self) -> list[str]:
        """Fields outside the search ranges (empty when compliant)."""
        out = []
        lo, hi = RANGES["hidden_units"]
        if not lo <= self.hidden_units <= hi:
            out.append("hidden_units")
        lo, hi = RANGES["aux_mlp_layers"]
        if not lo <= self.aux_mlp_layers <= hi:
            out.append("aux_mlp_layers")
        for name in ("attn_dropout", "mlp_dropout"):
            lo, hi = RANGES[name]
            if not lo <= getattr(self, name) <= hi:
                out.append(name)
        for h, (lo, hi) in zip(self.head_layers, RANGES["head_layers"]):
            if not lo <= h <= hi:
                out.append("head_layers")
                break
        if self.learning_rate not in LEARNING_RATE_GRID:
            out.append("learning_rate")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_layers"] = list(self.head_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MultiviewConfig":
        d = dict(d)
        if "head_layers" in d:
            d["head_layers"] = tuple(int(h) for h in d["head_layers"])
        return cls(**d)

    def with_(self, **changes) -> "MultiviewConfig":
        return replace(self, **changes)


class _Net:
    """Shared plumbing: parameter store, RNG streams, step counter."""

    kind = "base"

    def __init__(self, cfg: MultiviewConfig, d: int, zero_init: bool = False):
        cfg.validate()
        if d < 1:
            raise BadConfig(f"primary width must be >= 1, got {d}")
        self.cfg = cfg
        self.d = d
        self.store = ParamStore()
        self.steps = 0
        init_seq, self._train_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self._init_rng = np.random.default_rng(init_seq)
        self.zero_init = zero_init

    def _linear(self, prefix: str, fan_in: int, fan_out: int, layer: str | None = None) -> Linear:
        return Linear.create(self.store, prefix, fan_in, fan_out, self._init_rng, layer, self.zero_init)

    def train_rng(self) -> np.random.Generator:
        return np.random.default_rng(self._train_seq)

    def _check_inputs(self, x: Tensor, xt: Tensor) -> None:
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ShapeMismatch(f"primary input must be (B, {self.d}), got {x.shape}")
        if xt.ndim != 2 or xt.shape[1] != SECONDARY_DIM:
            raise ShapeMismatch(f"secondary input must be (B, {SECONDARY_DIM}), got {xt.shape}")
        if x.shape[0] != xt.shape[0]:
            raise ShapeMismatch("primary and secondary batches differ in size")

    def regularized_layers(self) -> list[str]:
        return [layer for layer in self.store.layers() if layer.startswith("head")]

    def forward(self, x, xt, training: bool = False, rng=None) -> Tensor:
        raise NotImplementedError

    def predict(self, x: np.ndarray, xt: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.forward(Tensor(x), Tensor(xt), training=False).data.copy()

    def _mlp(self, h: Tensor, layers: list[Linear], rate: float, training: bool, rng) -> Tensor:
        for lin in layers:
            h = dropout(lin(h).relu(), rate, training, rng)
        return h


class MultiviewNet(_Net):
    kind = "multiview"

    def __init__(self, cfg: MultiviewConfig, d: int, zero_init: bool = False):
        super().__init__(cfg, d, zero_init)
        m = cfg.model_dim
        h = cfg.hidden_units
        k_in, q_in, aux_in = {
            "multiview": (d, SECONDARY_DIM, d + SECONDARY_DIM),
            "primary": (d, d, d),
            "secondary": (SECONDARY_DIM, SECONDARY_DIM, SECONDARY_DIM),
        }[cfg.view]
        self.proj_k = self._linear("proj_k", k_in, cfg.tokens_k * m)
        self.proj_q = self._linear("proj_q", q_in, cfg.tokens_q * m)
        self.proj_v = self._linear("proj_v", q_in, cfg.tokens_k * m)
        self.ln_gain = self.store.add("attn_norm.gain", np.ones(m), "attn_norm")
        self.ln_shift = self.store.add("attn_norm.shift", np.zeros(m), "attn_norm")
        flat = cfg.tokens_q * m
        self.bn_gain = self.store.add("attn_bn.gain", np.ones(flat), "attn_bn")
        self.bn_shift = self.store.add("attn_bn.shift", np.zeros(flat), "attn_bn")
        self.bn_mean = self.store.add_buffer("attn_bn.running_mean", np.zeros(flat))
        self.bn_var = self.store.add_buffer("attn_bn.running_var", np.ones(flat))

        self.aux = []
        width = aux_in
        for i in range(cfg.aux_mlp_layers):
            self.aux.append(self._linear(f"aux.{i}", width, h))
            width = h

        joint = flat + h
        self.heads = []
        for o, depth in enumerate(cfg.head_layers):
            layers = []
            width = joint
            for i in range(depth):
                layers.append(self._linear(f"head{o}.{i}", width, h))
                width = h
            out = self._linear(f"head{o}.out", h, 1)
            self.heads.append((layers, out))

    def sources(self, x: Tensor, xt: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """(key source, query/value source, aux-branch input) for the configured view."""
        view = self.cfg.view
        if view == "primary":
            return x, x, x
        if view == "secondary":
            return xt, xt, xt
        return x, xt, concat([x, xt], axis=1)

    def attention_inputs(self, x: Tensor, xt: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Projected (Q, K, V) token tensors."""
        k_src, qv_src, _ = self.sources(x, xt)
        return self._project(k_src, qv_src)

    def _project(self, k_src: Tensor, qv_src: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        cfg = self.cfg
        m = cfg.model_dim
        b = k_src.shape[0]
        k = self.proj_k(k_src).reshape(b, cfg.tokens_k, m)
        q = self.proj_q(qv_src).reshape(b, cfg.tokens_q, m)
        v = self.proj_v(qv_src).reshape(b, cfg.tokens_k, m)
        return q, k, v

    def forward(self, x, xt, training: bool = False, rng=None) -> Tensor:
        x, xt = _as_tensor(x), _as_tensor(xt)
        self._check_inputs(x, xt)
        cfg = self.cfg
        b = x.shape[0]
        k_src, qv_src, aux_src = self.sources(x, xt)
        q, k, v = self._project(k_src, qv_src)
        a = scaled_dot_attention(q, k, v)
        a = layer_norm(a, self.ln_gain, self.ln_shift, cfg.norm_eps)
        a = dropout(a, cfg.attn_dropout, training, rng)
        a = a.reshape(b, cfg.tokens_q * cfg.model_dim)
        a = batch_norm(a, self.bn_gain, self.bn_shift, self.bn_mean, self.bn_var,
                       training, cfg.bn_momentum, cfg.norm_eps)

        h = self._mlp(aux_src, self.aux, cfg.mlp_dropout, training, rng)
        joint = concat([a, h], axis=1)
        outs = []
        for layers, out in self.heads:
            outs.append(out(self._mlp(joint, layers, cfg.attn_dropout, training, rng)))
        return concat(outs, axis=1)


class MLPNet(_Net):
    """Baseline: the aux-branch MLP on concat(x, xt) followed by a linear read-out."""

    kind = "mlp"

    def __init__(self, cfg: MultiviewConfig, d: int, zero_init: bool = False):
        super().__init__(cfg, d, zero_init)
        width = d + SECONDARY_DIM
        self.layers = []
        for i in range(cfg.aux_mlp_layers):
            self.layers.append(self._linear(f"mlp.{i}", width, cfg.hidden_units))
            width = cfg.hidden_units
        self.out = self._linear("mlp.out", width, N_OUTPUTS)

    def regularized_layers(self) -> list[str]:
        return []

    def forward(self, x, xt, training: bool = False, rng=None) -> Tensor:
        x, xt = _as_tensor(x), _as_tensor(xt)
        self._check_inputs(x, xt)
        h = self._mlp(concat([x, xt], axis=1), self.layers, self.cfg.mlp_dropout, training, rng)
        return self.out(h)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def build_multiview(cfg: MultiviewConfig, d: int, zero_init: bool = False) -> MultiviewNet:
    return MultiviewNet(cfg, d, zero_init)


def build_mlp(cfg: MultiviewConfig, d: int, zero_init: bool = False) -> MLPNet:
    return MLPNet(cfg, d, zero_init)


NET_KINDS = {"multiview": MultiviewNet, "mlp": MLPNet}


def build_net(kind: str, cfg: MultiviewConfig, d: int, zero_init: bool = False) -> _Net:
    try:
        return NET_KINDS[kind](cfg, d, zero_init)
    except KeyError:
        raise BadConfig(f"unknown network kind {kind!r}") from None


def predict_multiview(model: _Net, x: np.ndarray, xt: np.ndarray) -> np.ndarray:
    """Eval-mode prediction, shape (B, 4)."""
    return model.predict(np.atleast_2d(x), np.atleast_2d(xt))
