"""Stochastic training of the conditioned-embedding factorization.

The objective is a squared error between the model's predicted log
co-occurrence and the observed log of the scaled count, summed over nonzero
tensor entries, plus two penalties: a consistency term ``(alpha/2) *
sum ||Q_a - Q_b||^2`` over topology-linked condition pairs, and a deviation
term ``(beta/2) * (||D||^2 + ||Dp||^2)``.

Each step visits one nonzero entry and updates only the parameters that entry
touches, at O(dim) cost.  Regularizers are folded into the steps: the
deviation penalty is applied at full strength on every touch, and the
consistency penalty is applied at strength ``alpha / nnz_c`` (nnz_c = nonzero
entries in condition c) so that one full epoch applies exactly the batch
consistency gradient.  Learning rates adapt per parameter via accumulated
squared gradients (AdaGrad).
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cooc import CoocTensor
from .corpus import ConditionManifest, Vocabulary
from .exceptions import FormatError, TrainingDivergedError
from .model import ModelParams, init_params

logger = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-8

# Default consistency weights per topology; overridable via TrainConfig.alpha.
DEFAULT_ALPHA = {"chain": 1.5, "complete": 1.0}
DEFAULT_BETA = 0.2
DEFAULT_EPOCHS = 40
DEFAULT_DIM = 50
DEFAULT_LR = 0.05

_CONFIG_KEYS = {"alpha", "beta", "epochs", "dim", "initial_lr", "seed",
                "workers", "topology_override", "scale_deviation_reg"}


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``alpha=None`` selects the per-topology default (1.5 for chain, 1.0 for
    complete).  ``workers=1`` is the deterministic mode; ``workers>1`` runs
    lock-free parallel updates and gives up reproducibility.
    """

    alpha: float | None = None
    beta: float = DEFAULT_BETA
    epochs: int = DEFAULT_EPOCHS
    dim: int = DEFAULT_DIM
    initial_lr: float = DEFAULT_LR
    seed: int = 0
    workers: int = 1
    topology_override: str | None = None
    # When set, each touch of a deviation row applies beta divided by the
    # row's touch count per epoch instead of full-strength beta.
    scale_deviation_reg: bool = False

    def __post_init__(self):
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def resolved_alpha(self, topology: str) -> float:
        if self.alpha is not None:
            return self.alpha
        return DEFAULT_ALPHA[topology]

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"train config {path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise FormatError(f"train config {path}: expected a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise FormatError(f"train config {path}: unknown keys {sorted(unknown)}")
        try:
            return cls(**raw)
        except (TypeError, ValueError) as e:
            raise FormatError(f"train config {path}: {e}") from e


@dataclass
class OptimizerState:
    """Accumulated squared gradients, one accumulator per parameter."""

    V: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    D: np.ndarray
    Dp: np.ndarray
    B: np.ndarray
    Bp: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "OptimizerState":
        return cls(**{k: np.zeros_like(v) for k, v in params.tensors().items()})


@dataclass
class EntryGradients:
    """Gradients of one entry's squared residual w.r.t. the touched parameters."""

    v: np.ndarray   # dL/dV_i
    u: np.ndarray   # dL/dU_j
    q: np.ndarray   # dL/dQ_c
    d: np.ndarray   # dL/dD_{i,c}
    dp: np.ndarray  # dL/dDp_{j,c}
    b: float        # dL/dB_{i,c}
    bp: float       # dL/dBp_{j,c}


def residual(params: ModelParams, i: int, j: int, c: int, x: float) -> float:
    """Prediction error for one entry: model estimate minus log(count)."""
    if x <= 0:
        raise ValueError(f"count must be positive, got {x}")
    p = params.V[i] * params.Q[c] + params.D[i, c]
    r = params.U[j] * params.Q[c] + params.Dp[j, c]
    return float(p @ r + params.B[i, c] + params.Bp[j, c] - math.log(x))


def entry_gradients(params: ModelParams, i: int, j: int, c: int, x: float) -> EntryGradients:
    """Analytic gradients of the squared residual of one entry.

    Regularizer contributions are handled separately (see ``sgd_step``).
    """
    if x <= 0:
        raise ValueError(f"count must be positive, got {x}")
    qc = params.Q[c]
    p = params.V[i] * qc + params.D[i, c]
    r = params.U[j] * qc + params.Dp[j, c]
    e = float(p @ r) + float(params.B[i, c]) + float(params.Bp[j, c]) - math.log(x)
    te = 2.0 * e
    return EntryGradients(
        v=te * (r * qc),
        u=te * (p * qc),
        q=te * (params.V[i] * r + params.U[j] * p),
        d=te * r,
        dp=te * p,
        b=te,
        bp=te,
    )


def q_regularizer_gradient(params: ModelParams, c: int, neighbors: Sequence[int],
                           alpha: float, nnz_c: int) -> np.ndarray:
    """Per-step consistency gradient for Q_c.

    Scaled by 1/nnz_c so that summing over every step of one epoch (condition
    c is visited nnz_c times) reproduces the batch consistency gradient
    ``alpha * sum_b (Q_c - Q_b)``.
    """
    if not len(neighbors) or nnz_c == 0 or alpha == 0.0:
        return np.zeros(params.dim)
    nb = np.asarray(neighbors, dtype=np.int64)
    return (alpha / nnz_c) * (len(nb) * params.Q[c] - params.Q[nb].sum(axis=0))


def total_loss(params: ModelParams, tensor: CoocTensor, manifest: ConditionManifest,
               config: TrainConfig, chunk: int = 1 << 18) -> float:
    """Full objective: data term over nonzero entries plus both penalties."""
    alpha = config.resolved_alpha(manifest.topology)
    data = 0.0
    for s in range(0, tensor.nnz, chunk):
        sl = slice(s, s + chunk)
        i = tensor.i[sl].astype(np.int64)
        j = tensor.j[sl].astype(np.int64)
        c = tensor.c[sl].astype(np.int64)
        p = params.V[i] * params.Q[c] + params.D[i, c]
        r = params.U[j] * params.Q[c] + params.Dp[j, c]
        e = (np.einsum("nm,nm->n", p, r) + params.B[i, c] + params.Bp[j, c]
             - np.log(tensor.x[sl]))
        data += float(e @ e)
    consistency = 0.0
    for a, b in manifest.pairs():
        diff = params.Q[a] - params.Q[b]
        consistency += float(diff @ diff)
    deviation = float(np.sum(params.D * params.D)) + float(np.sum(params.Dp * params.Dp))
    return data + 0.5 * alpha * consistency + 0.5 * config.beta * deviation


def total_gradients(params: ModelParams, tensor: CoocTensor, manifest: ConditionManifest,
                    config: TrainConfig) -> dict[str, np.ndarray]:
    """Batch gradient of ``total_loss``, assembled from the per-entry path.

    Intended for gradient checking and small instances; cost is one Python
    loop over the nonzero entries.
    """
    alpha = config.resolved_alpha(manifest.topology)
    grads = {k: np.zeros_like(v) for k, v in params.tensors().items()}
    for i, j, c, x in zip(tensor.i, tensor.j, tensor.c, tensor.x):
        i, j, c = int(i), int(j), int(c)
        g = entry_gradients(params, i, j, c, float(x))
        grads["V"][i] += g.v
        grads["U"][j] += g.u
        grads["Q"][c] += g.q
        grads["D"][i, c] += g.d
        grads["Dp"][j, c] += g.dp
        grads["B"][i, c] += g.b
        grads["Bp"][j, c] += g.bp
    for a, b in manifest.pairs():
        diff = params.Q[a] - params.Q[b]
        grads["Q"][a] += alpha * diff
        grads["Q"][b] -= alpha * diff
    grads["D"] += config.beta * params.D
    grads["Dp"] += config.beta * params.Dp
    return grads


@dataclass
class StepContext:
    """Precomputed per-run quantities consumed by ``sgd_step``."""

    alpha: float
    beta: float
    lr: float
    q_neighbors: tuple[np.ndarray, ...]      # per condition, linked condition indices
    nnz_by_condition: np.ndarray             # int64, per condition
    # Optional per-row 1/touch-count scaling for the deviation penalty
    # (word side indexed [i, c], context side [j, c]); None = full strength.
    dev_scale_word: np.ndarray | None = None
    dev_scale_ctx: np.ndarray | None = None
    eps: float = ADAGRAD_EPS

    @classmethod
    def build(cls, tensor: CoocTensor, manifest: ConditionManifest,
              config: TrainConfig) -> "StepContext":
        neighbors = tuple(
            np.asarray(manifest.neighbors(c), dtype=np.int64)
            for c in range(len(manifest))
        )
        nnz_c = tensor.nnz_by_condition().astype(np.int64)
        dev_w = dev_c = None
        if config.scale_deviation_reg:
            dev_w = np.zeros((tensor.n_words, tensor.n_conditions))
            dev_c = np.zeros((tensor.n_words, tensor.n_conditions))
            np.add.at(dev_w, (tensor.i.astype(np.int64), tensor.c.astype(np.int64)), 1.0)
            np.add.at(dev_c, (tensor.j.astype(np.int64), tensor.c.astype(np.int64)), 1.0)
            with np.errstate(divide="ignore"):
                dev_w = np.where(dev_w > 0, 1.0 / dev_w, 0.0)
                dev_c = np.where(dev_c > 0, 1.0 / dev_c, 0.0)
        return cls(
            alpha=config.resolved_alpha(manifest.topology),
            beta=config.beta,
            lr=config.initial_lr,
            q_neighbors=neighbors,
            nnz_by_condition=nnz_c,
            dev_scale_word=dev_w,
            dev_scale_ctx=dev_c,
        )


def _adagrad_row(param_row: np.ndarray, acc_row: np.ndarray, g: np.ndarray,
                 lr: float, eps: float) -> None:
    acc_row += g * g
    param_row -= lr * g / np.sqrt(acc_row + eps)


def sgd_step(params: ModelParams, opt: OptimizerState,
             entry: tuple[int, int, int, float], ctx: StepContext) -> None:
    """One stochastic update from a single nonzero entry (i, j, c, x).

    Applies the entry's residual gradients plus the scheduled regularizer
    gradients to exactly the touched parameters, with per-parameter AdaGrad
    learning rates.  Mutates ``params`` and ``opt`` in place.  A non-finite
    residual aborts training rather than silently corrupting parameters.
    """
    i, j, c, x = entry
    if x <= 0:
        raise ValueError(f"count must be positive, got {x}")
    qc = params.Q[c]
    vi = params.V[i]
    uj = params.U[j]
    p = vi * qc + params.D[i, c]
    r = uj * qc + params.Dp[j, c]
    e = float(p @ r) + float(params.B[i, c]) + float(params.Bp[j, c]) - math.log(x)
    if not math.isfinite(e):
        raise TrainingDivergedError(
            f"non-finite residual at entry (i={i}, j={j}, c={c}); "
            "try a smaller initial learning rate")
    te = 2.0 * e

    gv = te * (r * qc)
    gu = te * (p * qc)
    gq = te * (vi * r + uj * p)
    nb = ctx.q_neighbors[c]
    if nb.size and ctx.alpha != 0.0:
        gq = gq + (ctx.alpha / ctx.nnz_by_condition[c]) * (
            len(nb) * qc - params.Q[nb].sum(axis=0))
    beta_w = ctx.beta if ctx.dev_scale_word is None else ctx.beta * ctx.dev_scale_word[i, c]
    beta_c = ctx.beta if ctx.dev_scale_ctx is None else ctx.beta * ctx.dev_scale_ctx[j, c]
    gd = te * r + beta_w * params.D[i, c]
    gdp = te * p + beta_c * params.Dp[j, c]

    _adagrad_row(params.V[i], opt.V[i], gv, ctx.lr, ctx.eps)
    _adagrad_row(params.U[j], opt.U[j], gu, ctx.lr, ctx.eps)
    _adagrad_row(params.Q[c], opt.Q[c], gq, ctx.lr, ctx.eps)
    _adagrad_row(params.D[i, c], opt.D[i, c], gd, ctx.lr, ctx.eps)
    _adagrad_row(params.Dp[j, c], opt.Dp[j, c], gdp, ctx.lr, ctx.eps)
    opt.B[i, c] += te * te
    params.B[i, c] -= ctx.lr * te / math.sqrt(opt.B[i, c] + ctx.eps)
    opt.Bp[j, c] += te * te
    params.Bp[j, c] -= ctx.lr * te / math.sqrt(opt.Bp[j, c] + ctx.eps)


@dataclass
class TrainResult:
    """Final parameters plus the per-epoch loss/time trace."""

    params: ModelParams
    epoch_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)


ProgressFn = Callable[[int, float, float], None]


def _run_entries(params: ModelParams, opt: OptimizerState, ctx: StepContext,
                 i_arr: np.ndarray, j_arr: np.ndarray, c_arr: np.ndarray,
                 x_arr: np.ndarray, order: np.ndarray) -> None:
    for idx in order:
        sgd_step(params, opt,
                 (int(i_arr[idx]), int(j_arr[idx]), int(c_arr[idx]), float(x_arr[idx])),
                 ctx)


def train(tensor: CoocTensor, vocab: Vocabulary, manifest: ConditionManifest,
          config: TrainConfig, on_epoch: ProgressFn | None = None) -> TrainResult:
    """Run the full training loop and return the final parameters.

    Each epoch visits every nonzero entry exactly once in a seeded random
    permutation (reshuffled per epoch from the master seed).  With
    ``workers=1`` the run is bit-reproducible; with more workers the
    permutation is partitioned across threads whose unsynchronized updates
    may race benignly.
    """
    if tensor.nnz == 0:
        raise ValueError("co-occurrence tensor is empty")
    if tensor.n_words != len(vocab):
        raise ValueError(f"tensor covers {tensor.n_words} words but vocabulary "
                         f"has {len(vocab)}")
    if config.topology_override is not None:
        manifest = manifest.with_topology(config.topology_override)
    if tensor.n_conditions != len(manifest):
        raise ValueError(f"tensor covers {tensor.n_conditions} conditions but "
                         f"manifest has {len(manifest)}")

    seed = config.seed % 2**63
    params = init_params(len(vocab), len(manifest), config.dim, seed)
    opt = OptimizerState.zeros_like(params)
    ctx = StepContext.build(tensor, manifest, config)

    i_arr = tensor.i.astype(np.int64)
    j_arr = tensor.j.astype(np.int64)
    c_arr = tensor.c.astype(np.int64)
    x_arr = tensor.x

    result = TrainResult(params)
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = np.random.default_rng([seed, epoch]).permutation(tensor.nnz)
        if config.workers == 1:
            _run_entries(params, opt, ctx, i_arr, j_arr, c_arr, x_arr, order)
        else:
            slices = np.array_split(order, config.workers)
            threads = [
                threading.Thread(target=_run_entries,
                                 args=(params, opt, ctx, i_arr, j_arr, c_arr, x_arr, part))
                for part in slices if len(part)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        try:
            params.validate_finite()
        except FloatingPointError as e:
            raise TrainingDivergedError(
                f"{e} after epoch {epoch + 1}; try a smaller initial "
                "learning rate") from e
        loss_params = params.copy() if config.workers > 1 else params
        loss = total_loss(loss_params, tensor, manifest, config)
        seconds = time.perf_counter() - started
        result.epoch_losses.append(loss)
        result.epoch_seconds.append(seconds)
        if on_epoch is not None:
            on_epoch(epoch, loss, seconds)
        logger.info("epoch %d\tloss %.6f\t%.2fs", epoch + 1, loss, seconds)
    return result
