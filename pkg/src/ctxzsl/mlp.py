"""Feedforward binary classifier: ReLU hidden layers, dropout, sigmoid output, Adam.

Everything is plain numpy in float64. Training is serial and deterministic
for a given seed.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, NumericError

log = logging.getLogger(__name__)

HIDDEN_LAYERS = (70, 30, 70, 30, 70)
ADAM_LR = 0.0012
ADAM_BETA1 = 0.92
ADAM_BETA2 = 0.9992
ADAM_EPS = 1e-08
BCE_CLAMP = 1e-12


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout: float = 0.5
    seed: int = 0
    activation: str = "relu"
    norm_mean: Optional[np.ndarray] = None
    norm_std: Optional[np.ndarray] = None

    @property
    def layout(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class AdamState:
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_model(cls, model: MlpModel, **hyper) -> "AdamState":
        params = model.params()
        return cls(**hyper, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])

    def hyperparameters(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


@dataclass
class TrainConfig:
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 5
    hidden: tuple[int, ...] = HIDDEN_LAYERS
    dropout: float = 0.5
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    standardize: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainRun:
    config: TrainConfig
    seed: int
    partition_sizes: tuple[int, int, int]
    partitions: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    initial_train_loss: float = float("nan")
    final_train_loss: float = float("nan")
    best_epoch: int = 0
    test_metrics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "seed": self.seed,
            "partition_sizes": list(self.partition_sizes),
            "history": self.history,
            "initial_train_loss": self.initial_train_loss,
            "final_train_loss": self.final_train_loss,
            "best_epoch": self.best_epoch,
            "test_metrics": self.test_metrics,
        }


def init_model(input_dim: int, seed: int = 0, hidden: Sequence[int] = HIDDEN_LAYERS, dropout: float = 0.5) -> MlpModel:
    """He-uniform weights (limit sqrt(6 / fan_in)), zero biases."""
    if input_dim < 1:
        raise DataError(f"input_dim must be >= 1, got {input_dim}")
    if not 0.0 <= dropout < 1.0:
        raise DataError(f"dropout must be in [0, 1), got {dropout}")
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, dropout, seed)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        X = vectors
    else:
        X = np.asarray([getattr(v, "values", v) for v in vectors], dtype=np.float64)
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def _normalize(model: MlpModel, X: np.ndarray) -> np.ndarray:
    if model.norm_mean is None:
        return X
    return (X - model.norm_mean) / model.norm_std


def _forward(model: MlpModel, X: np.ndarray, train: bool, rng=None):
    if X.shape[1] != model.input_dim:
        raise DataError(f"dimension mismatch: model expects {model.input_dim}, got {X.shape[1]}")
    h = _normalize(model, X)
    cache = []
    keep = 1.0 - model.dropout
    last = len(model.weights) - 1
    for layer, (W, b) in enumerate(zip(model.weights, model.biases)):
        # BLAS picks kernels by batch shape, so a row's rounding can depend on its
        # neighbours; inference uses einsum's fixed per-row order instead
        z = (h @ W if train else np.einsum("ij,jk->ik", h, W)) + b
        if layer == last:
            cache.append((h, z, None))
            return _sigmoid(z[:, 0]), cache
        a = np.maximum(z, 0.0)
        mask = None
        if train and model.dropout > 0:
            if rng is None:
                raise DataError("train-mode forward needs a random generator")
            mask = (rng.random(a.shape) < keep) / keep
            a = a * mask
        cache.append((h, z, mask))
        h = a
    raise AssertionError("unreachable")


def forward(model: MlpModel, x, mode: str = "infer", rng=None):
    """Probability for one vector (returns a float) or a batch (returns an array)."""
    if mode not in ("train", "infer"):
        raise DataError(f"mode must be 'train' or 'infer', got {mode!r}")
    arr = np.asarray(getattr(x, "values", x), dtype=np.float64)
    p, _ = _forward(model, np.atleast_2d(arr), mode == "train", rng)
    return float(p[0]) if arr.ndim == 1 else p


def bce_loss(p, y):
    """Binary cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12]."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(out) if out.ndim == 0 else out


def mean_loss(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return float("nan")
    p, _ = _forward(model, X, False)
    return float(np.mean(bce_loss(p, y)))


def loss_and_grads(model: MlpModel, X: np.ndarray, y: np.ndarray, train: bool = False, rng=None):
    """Mean BCE over the batch and its gradients as ``(loss, dW list, db list)``."""
    p, cache = _forward(model, X, train, rng)
    loss = float(np.mean(bce_loss(p, y)))
    n = X.shape[0]
    dz = ((p - y) / n)[:, None]
    gw = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        h_in, _, _ = cache[layer]
        gw[layer] = h_in.T @ dz
        gb[layer] = dz.sum(axis=0)
        if layer == 0:
            break
        dh = dz @ model.weights[layer].T
        _, z_prev, mask_prev = cache[layer - 1]
        if mask_prev is not None:
            dh = dh * mask_prev
        dz = dh * (z_prev > 0)
    return loss, gw, gb


def adam_step(model: MlpModel, grads, state: AdamState):
    """One bias-corrected Adam update, in place. ``grads`` follows ``model.params()`` order."""
    params = model.params()
    if len(grads) != len(params):
        raise DataError("gradient list does not match model parameters")
    for g, p in zip(grads, params):
        if g.shape != p.shape:
            raise DataError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient encountered; aborting run")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state


def _split_sizes(n: int, fractions) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def train(pos_vectors, neg_vectors, config: Optional[TrainConfig] = None, seed: int = 0):
    """Train on generic labels (1 for ``pos_vectors``, 0 for ``neg_vectors``).

    Returns ``(model, run)``; the model is the best-validation checkpoint.
    """
    config = config or TrainConfig()
    Xp = _as_matrix(pos_vectors) if len(pos_vectors) else np.zeros((0, 0))
    Xn = _as_matrix(neg_vectors) if len(neg_vectors) else np.zeros((0, 0))
    if len(Xp) == 0 or len(Xn) == 0:
        raise DataError("both positive and negative training vectors are required")
    if len(Xp) != len(Xn):
        raise DataError(f"training inputs must be balanced: {len(Xp)} positive vs {len(Xn)} negative")
    if Xp.shape[1] != Xn.shape[1]:
        raise DataError("positive and negative vectors differ in dimension")

    rng = np.random.default_rng(seed)
    X = np.vstack([Xp, Xn])
    y = np.concatenate([np.ones(len(Xp)), np.zeros(len(Xn))])
    n = len(y)
    perm = rng.permutation(n)
    n_tr, n_va, n_te = _split_sizes(n, config.split)
    parts = {"train": perm[:n_tr], "validation": perm[n_tr:n_tr + n_va], "test": perm[n_tr + n_va:]}

    model = init_model(X.shape[1], seed, config.hidden, config.dropout)
    if config.standardize:
        Xtr = X[parts["train"]]
        mean = Xtr.mean(axis=0)
        std = Xtr.std(axis=0)
        std[std == 0] = 1.0
        model.norm_mean, model.norm_std = mean, std
    state = AdamState.for_model(model, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    Xtr, ytr = X[parts["train"]], y[parts["train"]]
    Xva, yva = X[parts["validation"]], y[parts["validation"]]
    run = TrainRun(config, seed, (n_tr, n_va, n_te), parts)
    run.initial_train_loss = mean_loss(model, Xtr, ytr)

    best_loss = math.inf
    best = copy.deepcopy(model)
    wait = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_tr)
        total = 0.0
        for start in range(0, n_tr, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, gw, gb = loss_and_grads(model, Xtr[idx], ytr[idx], train=True, rng=rng)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            total += loss * len(idx)
            adam_step(model, [*gw, *gb], state)
        train_loss = total / max(n_tr, 1)
        val_loss = mean_loss(model, Xva, yva) if n_va else mean_loss(model, Xtr, ytr)
        run.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.debug("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best = copy.deepcopy(model)
            run.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break

    run.final_train_loss = mean_loss(best, Xtr, ytr)
    if n_te:
        from .evaluation import roc_auc

        Xte, yte = X[parts["test"]], y[parts["test"]]
        p_te = predict(best, Xte)
        metrics = {"loss": float(np.mean(bce_loss(p_te, yte))), "n": int(n_te)}
        metrics["auc"] = roc_auc(p_te, yte) if 0 < yte.sum() < n_te else None
        run.test_metrics = metrics
    return best, run


def predict(model: MlpModel, vectors) -> np.ndarray:
    if len(vectors) == 0:
        return np.zeros(0)
    p, _ = _forward(model, _as_matrix(vectors), False)
    return p


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    """``|a - n| / max(|a|, |n|)``; falls back to the absolute gap when both are below ``floor``."""
    scale = max(abs(analytic), abs(numeric))
    diff = abs(analytic - numeric)
    return diff if scale < floor else diff / scale


def gradient_check(model: MlpModel, X, y, epsilon: float = 1e-5, samples_per_param: int = 20, seed: int = 0) -> float:
    """Max relative error between backprop and central differences, dropout off."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    _, gw, gb = loss_and_grads(model, X, y, train=False)
    analytic = [*gw, *gb]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for param, grad in zip(model.params(), analytic):
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        k = min(samples_per_param, flat.size)
        for i in rng.choice(flat.size, size=k, replace=False):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = mean_loss(model, X, y)
            flat[i] = orig - epsilon
            down = mean_loss(model, X, y)
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            worst = max(worst, relative_error(float(gflat[i]), numeric))
    return worst
