"""Mini-batch training with early stopping, and random hyperparameter search."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import OptimizerState, Tensor, apply_step, l2_penalty
from ..autodiff.optim import LEARNING_RATE_GRID
from ..errors import BadConfig, NonFiniteError, NonFiniteLoss
from .multiview import RANGES, MultiviewConfig, _Net, build_net

log = logging.getLogger(__name__)


@dataclass
class Arrays:
    """Aligned model inputs and (already scaled) targets."""

    x: np.ndarray
    xt: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx) -> "Arrays":
        return Arrays(self.x[idx], self.xt[idx], self.y[idx])


@dataclass
class TrainResult:
    model: _Net
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_rmse: float = float("inf")


def val_rmse(model: _Net, data: Arrays) -> float:
    """Mean over outputs of the per-output RMSE (eval mode)."""
    pred = model.predict(data.x, data.xt)
    return float(np.mean(np.sqrt(np.mean((pred - data.y) ** 2, axis=0))))


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    chunks = [perm[i : i + size] for i in range(0, n, size)]
    # batch norm needs two rows; fold a singleton tail into the previous batch
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return chunks


def loss_fn(model: _Net, batch: Arrays, training: bool, rng=None, penalty: bool = True) -> Tensor:
    """Squared error summed over outputs, averaged over the batch, plus the
    head-layer L2 penalty when ``penalty`` is set."""
    pred = model.forward(Tensor(batch.x), Tensor(batch.xt), training=training, rng=rng)
    diff = pred - Tensor(batch.y)
    mse = (diff * diff).sum() * (1.0 / len(batch))
    layers = model.regularized_layers()
    if penalty and model.cfg.head_l2 > 0 and layers:
        mse = mse + l2_penalty(model.store, model.cfg.head_l2, layers)
    return mse


def penalty_value(model: _Net) -> float:
    layers = model.regularized_layers()
    if model.cfg.head_l2 == 0 or not layers:
        return 0.0
    return l2_penalty(model.store, model.cfg.head_l2, layers).item()


def train_dnn(model: _Net, train: Arrays, val: Arrays) -> TrainResult:
    """Fit a freshly built network; keep the parameters of the best
    validation epoch.

    Training stops once the validation score has failed to improve for more
    than ``patience`` consecutive epochs.
    """
    if model.steps != 0:
        raise BadConfig("train_dnn needs a freshly initialised model")
    if len(train) < 2 or len(val) < 1:
        raise BadConfig("need >= 2 training rows and >= 1 validation row")
    cfg = model.cfg
    opt = OptimizerState(kind=cfg.optimizer, learning_rate=cfg.learning_rate)
    reg_layers = model.regularized_layers()
    rng = model.train_rng()
    result = TrainResult(model)
    best_state = model.store.state_dict()
    stale = 0
    for epoch in range(cfg.max_epochs):
        total = 0.0
        for idx in _batches(len(train), cfg.batch_size, rng):
            model.store.zero_grad()
            try:
                # the penalty gradient is added inside the optimizer step
                loss = loss_fn(model, train.take(idx), training=True, rng=rng, penalty=False)
                loss.backward()
                apply_step(opt, model.store, cfg.head_l2, reg_layers)
            except NonFiniteError as exc:
                raise NonFiniteLoss(f"training diverged at epoch {epoch}: {exc}") from exc
            model.steps += 1
            total += loss.item() * len(idx)
        for _, t in model.store.items():
            if not np.all(np.isfinite(t.data)):
                raise NonFiniteLoss(f"non-finite parameters after epoch {epoch}")
        score = val_rmse(model, val)
        result.history.append({"epoch": epoch, "train_mse": total / len(train),
                               "penalty": penalty_value(model), "val_rmse": score})
        if score < result.best_val_rmse:
            result.best_val_rmse = score
            result.best_epoch = epoch
            best_state = model.store.state_dict()
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break
    model.store.load_state_dict(best_state)
    model.store.zero_grad()
    return result


def sample_config(rng: np.random.Generator, base: MultiviewConfig) -> MultiviewConfig:
    """Draw one configuration uniformly from the search ranges."""
    lo, hi = RANGES["hidden_units"]
    hidden = int(rng.integers(lo, hi + 1))
    lo, hi = RANGES["aux_mlp_layers"]
    aux = int(rng.integers(lo, hi + 1))
    attn = float(rng.uniform(*RANGES["attn_dropout"]))
    mlp = float(rng.uniform(*RANGES["mlp_dropout"]))
    heads = tuple(int(rng.integers(lo, hi + 1)) for lo, hi in RANGES["head_layers"])
    optimizer = ("adam", "sgd")[int(rng.integers(0, 2))]
    lr = LEARNING_RATE_GRID[int(rng.integers(0, len(LEARNING_RATE_GRID)))]
    seed = int(rng.integers(0, 2**31 - 1))
    return base.with_(
        hidden_units=hidden,
        aux_mlp_layers=aux,
        attn_dropout=attn,
        mlp_dropout=mlp,
        head_layers=heads,
        optimizer=optimizer,
        learning_rate=lr,
        seed=seed,
        d_model=None,
    )


@dataclass
class SearchResult:
    best_config: MultiviewConfig
    best: TrainResult
    trials: list[dict] = field(default_factory=list)


def hyperparameter_search(
    kind: str,
    base: MultiviewConfig,
    budget: int,
    seed: int,
    train: Arrays,
    val: Arrays,
    optimizers: tuple[str, ...] | None = None,
) -> SearchResult:
    """Random search; the winner minimises mean validation RMSE over outputs.

    Every trial trains a freshly built network. ``optimizers`` restricts the
    optimizer choice (both by default).
    """
    if budget < 1:
        raise BadConfig("search budget must be >= 1")
    rng = np.random.default_rng(seed)
    best: TrainResult | None = None
    best_cfg = None
    trials = []
    for t in range(budget):
        cfg = sample_config(rng, base)
        if optimizers is not None and cfg.optimizer not in optimizers:
            cfg = cfg.with_(optimizer=optimizers[t % len(optimizers)])
        model = build_net(kind, cfg, train.x.shape[1])
        res = train_dnn(model, train, val)
        trials.append({"trial": t, "config": cfg.to_dict(), "val_rmse": res.best_val_rmse,
                       "epochs": len(res.history)})
        log.info("trial %d %s %s lr=%g h=%d: val_rmse=%.4f after %d epochs", t, kind,
                 cfg.optimizer, cfg.learning_rate, cfg.hidden_units, res.best_val_rmse,
                 len(res.history))
        if best is None or res.best_val_rmse < best.best_val_rmse:
            best, best_cfg = res, cfg
    return SearchResult(best_cfg, best, trials)
