"""Training: negative sampling, binary cross-entropy loss, optimisers, fit.

Each positive triple is paired with ``k`` corruptions that independently
replace the head or the tail (fair coin) with a uniformly drawn entity — no
filtering of accidental true triples.  With ``p = sigmoid(score)`` clamped
into [1e-12, 1 - 1e-12], a batch of N positives with negatives N_i minimises

    L = -(1/N) * sum_i [ log p_i + sum_j log(1 - p_ij) ].

Gradients flow through the full score pipeline (manifold map, relation
operator, two-leg distance with its clamps and branch selection) by
reverse-mode differentiation; clamped values contribute zero gradient and
distance-branch ties follow the first branch.  The global margin ``delta``
is a hyperparameter: its gradient is reported by :func:`gradients` but
:func:`fit` never updates it.

Determinism: given a seed and fixed worker partitioning, shuffles, negative
draws, loss traces, and final parameters are reproducible bit for bit.
Multi-threaded batches shard rows in fixed order, so a given thread count is
deterministic too (different counts may differ in float summation order).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import geometry, operators
from .autodiff import Tensor
from .errors import (
    ConfigurationError,
    DivergenceError,
    EmptySplitError,
    NonFiniteGradientError,
)
from .kgdata import TripleStore
from .model import Model, apply_time_guard

PROB_CLAMP = 1e-12

PARAM_FAMILIES = ("entity_space", "entity_time", "biases", "theta", "phi", "mu", "delta")


@dataclass
class TrainConfig:
    """Hyperparameters of one optimisation run."""

    batch_size: int = 500
    neg_samples: int = 50
    learning_rate: float = 5e-3
    epochs: int = 200
    optimizer: str = "adam"
    seed: int = 0
    threads: int = 1
    deterministic: bool = False
    grad_check: bool = False

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.neg_samples < 1:
            raise ConfigurationError("neg_samples must be >= 1")
        if not (0.0 < self.learning_rate and np.isfinite(self.learning_rate)):
            raise ConfigurationError("learning_rate must be positive")
        if not 0 <= self.epochs <= 1000:
            raise ConfigurationError("epochs must lie in [0, 1000]")
        if self.optimizer not in ("adam", "adagrad"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")

    @property
    def effective_threads(self) -> int:
        return 1 if self.deterministic else self.threads


# --- negative sampling ------------------------------------------------------


def sample_negatives(
    triple, k: int, n_entities: int, rng: np.random.Generator
) -> np.ndarray:
    """``k`` corruptions of one triple: head or tail (fair coin) replaced
    by a uniform entity.  Deterministic under a fixed generator state."""
    h, r, t = (int(v) for v in triple)
    corrupt_head = rng.random(k) < 0.5
    repl = rng.integers(0, n_entities, k)
    out = np.empty((k, 3), dtype=np.int64)
    out[:, 0] = np.where(corrupt_head, repl, h)
    out[:, 1] = r
    out[:, 2] = np.where(corrupt_head, t, repl)
    return out


def _sample_negatives_batch(
    triples: np.ndarray, k: int, n_entities: int, rng: np.random.Generator
) -> np.ndarray:
    """(B, k, 3) corruptions; one coin draw block then one entity block."""
    b = triples.shape[0]
    corrupt_head = rng.random((b, k)) < 0.5
    repl = rng.integers(0, n_entities, (b, k))
    out = np.empty((b, k, 3), dtype=np.int64)
    out[:, :, 0] = np.where(corrupt_head, repl, triples[:, None, 0])
    out[:, :, 1] = triples[:, None, 1]
    out[:, :, 2] = np.where(corrupt_head, triples[:, None, 2], repl)
    return out


# --- loss graph ---------------------------------------------------------------


def _leaves(m: Model) -> dict[str, Tensor]:
    return {
        "entities": Tensor(m.entities, requires_grad=True),
        "biases": Tensor(m.biases, requires_grad=True),
        "theta": Tensor(m.theta, requires_grad=True),
        "phi": Tensor(m.phi, requires_grad=True),
        "mu": Tensor(m.mu, requires_grad=True),
        "delta": Tensor(np.float64(m.delta), requires_grad=True),
    }


def _scores(m: Model, leaves: dict[str, Tensor], triples: np.ndarray) -> Tensor:
    """Differentiable scores for an (N, 3) id array."""
    h = triples[:, 0]
    r = triples[:, 1]
    t = triples[:, 2]
    z_h = ad.take(leaves["entities"], h)
    z_t = ad.take(leaves["entities"], t)
    th = ad.take(leaves["theta"], r)
    ph = ad.take(leaves["phi"], r)
    if m.geometry == "ultra":
        head = geometry.phi(z_h, m.sig)
        mu = ad.take(leaves["mu"], r)
        moved = operators.relation_transform(th, ph, mu, head, m.sig, m.operator)
        tails = geometry.phi(z_t, m.sig)
        dist = geometry.dist_manhattan(moved, tails, m.sig)
    else:
        # Euclidean baseline: same stages on raw vectors, boosts pinned to 0
        mu0 = np.zeros((triples.shape[0], m.sig.q))
        moved = operators.relation_transform(th, ph, mu0, z_h, m.sig, m.operator)
        dist = ad.norm(moved - z_t, axis=-1)
    b_h = ad.take(leaves["biases"], h)[:, 0]
    b_t = ad.take(leaves["biases"], t)[:, 1]
    return -dist * dist + b_h + b_t + leaves["delta"]


def _loss_sum(m: Model, leaves: dict[str, Tensor], pos: np.ndarray, neg: np.ndarray):
    """Unnormalised loss sum: -(sum log p + sum log(1 - p~))."""
    n_pos = pos.shape[0]
    stacked = np.concatenate([pos, neg.reshape(-1, 3)], axis=0)
    p = ad.clip(ad.sigmoid(_scores(m, leaves, stacked)), PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_pos = p[:n_pos]
    p_neg = p[n_pos:]
    total = -(ad.sum_(ad.log(p_pos)))
    if p_neg.value.size:
        total = total - ad.sum_(ad.log(1.0 - p_neg))
    return total


def bce_loss(m: Model, positives: np.ndarray, negatives: np.ndarray | None = None) -> float:
    """Mean binary cross-entropy of a batch (no graph retained)."""
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if pos.shape[0] == 0:
        raise EmptySplitError("bce_loss: batch holds no positive triples")
    neg = (
        np.asarray(negatives, dtype=np.int64).reshape(pos.shape[0], -1, 3)
        if negatives is not None and np.asarray(negatives).size
        else np.empty((pos.shape[0], 0, 3), dtype=np.int64)
    )
    leaves = _leaves(m)
    total = _loss_sum(m, leaves, pos, neg)
    return float(total.value) / pos.shape[0]


def gradients(
    m: Model, positives: np.ndarray, negatives: np.ndarray | None = None
) -> dict[str, np.ndarray]:
    """Loss gradients for every parameter family.

    Returns arrays keyed by :data:`PARAM_FAMILIES`; entity gradients are
    split into their space and time blocks.
    """
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if pos.shape[0] == 0:
        raise EmptySplitError("gradients: batch holds no positive triples")
    neg = (
        np.asarray(negatives, dtype=np.int64).reshape(pos.shape[0], -1, 3)
        if negatives is not None and np.asarray(negatives).size
        else np.empty((pos.shape[0], 0, 3), dtype=np.int64)
    )
    leaves = _leaves(m)
    total = _loss_sum(m, leaves, pos, neg)
    total.backward()
    inv_n = 1.0 / pos.shape[0]
    out = {}
    for name in ("entities", "biases", "theta", "phi", "mu", "delta"):
        g = leaves[name].grad
        out[name] = (
            np.zeros_like(leaves[name].value) if g is None else g * inv_n
        )
    ent = out.pop("entities")
    out["entity_space"] = ent[:, : m.sig.p]
    out["entity_time"] = ent[:, m.sig.p :]
    out["delta"] = np.float64(out["delta"])
    return out


# --- optimisers -----------------------------------------------------------------


class Adam:
    """Adam with the standard bias-corrected moments."""

    def __init__(self, shapes: dict[str, tuple], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


class Adagrad:
    """Adagrad with per-coordinate accumulated squared gradients."""

    def __init__(self, shapes: dict[str, tuple], lr: float, eps: float = 1e-10):
        self.lr = lr
        self.eps = eps
        self.acc = {k: np.zeros(s) for k, s in shapes.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, p in params.items():
            g = grads[k]
            self.acc[k] += g * g
            p -= self.lr * g / (np.sqrt(self.acc[k]) + self.eps)


def _make_optimizer(cfg: TrainConfig, params: dict[str, np.ndarray]):
    shapes = {k: v.shape for k, v in params.items()}
    if cfg.optimizer == "adam":
        return Adam(shapes, cfg.learning_rate)
    return Adagrad(shapes, cfg.learning_rate)


# --- fit -------------------------------------------------------------------------


def _batch_grads(m: Model, pos: np.ndarray, neg: np.ndarray, threads: int):
    """Summed (not averaged) loss value and gradients for one batch."""
    shards = min(threads, pos.shape[0])
    blocks = np.array_split(np.arange(pos.shape[0]), shards)

    def one(block: np.ndarray):
        leaves = _leaves(m)
        total = _loss_sum(m, leaves, pos[block], neg[block])
        total.backward()
        grads = {}
        for name in ("entities", "biases", "theta", "phi", "mu", "delta"):
            g = leaves[name].grad
            grads[name] = np.zeros_like(leaves[name].value) if g is None else g
        return float(total.value), grads

    if shards == 1:
        return one(blocks[0])
    with ThreadPoolExecutor(max_workers=shards) as pool:
        results = list(pool.map(one, blocks))
    loss = 0.0
    grads = results[0][1]
    for part_loss, part_grads in results:
        if part_grads is not grads:
            for k in grads:
                grads[k] = grads[k] + part_grads[k]
        loss += part_loss
    return loss, grads


def fit(
    m: Model,
    store: TripleStore,
    cfg: TrainConfig,
    *,
    epoch_callback=None,
) -> tuple[Model, list[float]]:
    """Optimise a copy of ``m`` on ``store.train``; returns it with the
    per-epoch mean-loss trace.

    The input model is left untouched.  Losses going non-finite abort with
    :class:`DivergenceError` carrying the last epoch's parameters; non-finite
    gradients abort naming the offending parameter family.
    """
    cfg.validate()
    triples = store.train
    if triples.shape[0] == 0:
        raise EmptySplitError("fit: train split is empty")
    trained = m.clone()
    rng = np.random.default_rng(cfg.seed)
    params = {
        "entities": trained.entities,
        "biases": trained.biases,
        "theta": trained.theta,
        "phi": trained.phi,
        "mu": trained.mu,
    }
    if trained.geometry == "euclidean":
        params = {k: v for k, v in params.items() if k != "mu"}
    opt = _make_optimizer(cfg, params)
    threads = cfg.effective_threads
    trace: list[float] = []
    last_good = trained.clone()
    n = triples.shape[0]
    if cfg.grad_check and cfg.epochs > 0:
        _spot_check_gradients(trained, triples, cfg, rng=np.random.default_rng(cfg.seed + 1))
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = triples[perm[start : start + cfg.batch_size]]
            neg = _sample_negatives_batch(
                batch, cfg.neg_samples, trained.n_entities, rng
            )
            loss_sum, grads = _batch_grads(trained, batch, neg, threads)
            if not np.isfinite(loss_sum):
                raise DivergenceError(
                    f"loss became non-finite in epoch {epoch}",
                    last_good=last_good,
                    epoch=epoch,
                )
            inv_b = 1.0 / batch.shape[0]
            scaled = {k: grads[k] * inv_b for k in params}
            for k in params:
                if not np.all(np.isfinite(scaled[k])):
                    raise NonFiniteGradientError(
                        f"non-finite gradient in parameter family {k!r} "
                        f"(epoch {epoch})"
                    )
            opt.step(params, scaled)
            if trained.geometry == "ultra":
                apply_time_guard(trained.entities, trained.sig)
            epoch_loss += loss_sum
        for k, v in params.items():
            if not np.all(np.isfinite(v)):
                raise DivergenceError(
                    f"parameter family {k!r} became non-finite in epoch {epoch}",
                    last_good=last_good,
                    epoch=epoch,
                )
        trace.append(epoch_loss / n)
        last_good = trained.clone()
        if epoch_callback is not None:
            epoch_callback(epoch, trace[-1], trained)
    return trained, trace


def _spot_check_gradients(
    m: Model, triples: np.ndarray, cfg: TrainConfig, rng: np.random.Generator
) -> None:
    """Compare a few analytic derivatives against central differences."""
    batch = triples[: min(4, triples.shape[0])]
    neg = _sample_negatives_batch(batch, min(cfg.neg_samples, 4), m.n_entities, rng)
    grads = gradients(m, batch, neg)
    checks = [
        ("entities", (int(batch[0, 0]), 0)),
        ("biases", (int(batch[0, 0]), 0)),
        ("theta", (int(batch[0, 1]), 0)),
    ]
    h = 1e-5
    for family, idx in checks:
        probe = m.clone()
        arr = getattr(probe, family)
        arr[idx] += h
        up = bce_loss(probe, batch, neg)
        arr[idx] -= 2 * h
        down = bce_loss(probe, batch, neg)
        fd = (up - down) / (2 * h)
        if family == "entities":
            analytic = (
                grads["entity_space"][idx]
                if idx[1] < m.sig.p
                else grads["entity_time"][idx[0], idx[1] - m.sig.p]
            )
        else:
            analytic = grads[family][idx]
        scale = max(abs(fd), abs(analytic), 1e-8)
        if abs(fd - analytic) / scale > 1e-3:
            raise NonFiniteGradientError(
                f"gradient spot check failed for {family}{idx}: "
                f"analytic {analytic:.6e} vs finite difference {fd:.6e}"
            )
