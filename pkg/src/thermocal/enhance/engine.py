"""Fitting and inference for the enhancement curve.

Two fitting modes share one differentiable loss:

* ``optimize_theta_direct`` descends on the eight theta maps of a single
  frame with no network at all. It bounds what any network can reach.
* ``train`` fits :class:`NetworkWeights` with SGD + momentum over a dataset
  of (target, reference) region pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, OptimizationError
from ..regions import DEFAULT_BINS, RegionImage, emissivity_normalize
from .curve import N_ITER, CurveParams, curve_backward, curve_forward, curve_iterates
from .losses import SoftTarget, loss_total, soft_loss_and_grad
from .network import NetworkWeights, network_backward, network_forward, region_levels

log = logging.getLogger(__name__)


ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 1
    momentum: float = 0.9
    batch: int = 1
    seed: int = 0
    bins: int = DEFAULT_BINS
    # stop after this many per-sample updates (None: run every epoch in full)
    max_samples: int | None = None
    # global gradient-norm clip; None disables
    clip_norm: float | None = 1.0
    # rescale every update to norm ``clip_norm`` instead of only capping it
    normalize: bool = False
    # leading updates that follow the statistical term only (see optimize_theta_direct)
    warmup_samples: int = 0
    # "constant" or "cosine" (anneals to zero over the sample budget)
    schedule: str = "constant"
    # "sgd" (momentum) or "adam" (momentum is beta1)
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("constant", "cosine"):
            raise InputError(f"unknown learning-rate schedule {self.schedule!r}")
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if self.epochs < 1 or self.batch < 1:
            raise InputError("epochs and batch must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise InputError("momentum must lie in [0, 1)")


@dataclass
class TrainResult:
    weights: NetworkWeights
    final_loss: float
    epoch_losses: list = field(default_factory=list)
    samples_seen: int = 0


def _masked_plane(region: RegionImage) -> np.ndarray:
    return np.where(region.mask.bitmap, region.plane, 0.0)


def theta_loss_and_grad(plane, mask, theta, target: SoftTarget, stat_only: bool = False):
    """Soft L_total of the curve output inside ``mask`` and its gradient w.r.t. theta.

    With ``stat_only`` the histogram term is dropped from the gradient (it is
    still reported).
    """
    iterates = curve_iterates(plane, theta)
    total, stat, hist, g_vals = soft_loss_and_grad(iterates[-1][mask], target, stat_only=stat_only)
    g_out = np.zeros(plane.shape)
    g_out[mask] = g_vals
    g_theta, _ = curve_backward(g_out, iterates, theta)
    return total, stat, hist, g_theta


def _descend(plane, mask, theta, soft, steps, lr, stat_only, min_lr, trace):
    area = float(mask.sum())
    pick = 1 if stat_only else 0
    vals = theta_loss_and_grad(plane, mask, theta, soft, stat_only)
    obj, grad = vals[pick], vals[3]
    for step in range(steps):
        while True:
            trial = np.clip(theta - lr * area * grad, -1.0, 1.0)
            t_vals = theta_loss_and_grad(plane, mask, trial, soft, stat_only)
            if not np.isfinite(t_vals[0]):
                raise OptimizationError(f"non-finite loss at step {len(trace)}")
            if t_vals[pick] <= obj:
                break
            lr *= 0.5
            if lr < min_lr:
                return theta, lr
        theta, obj, grad = trial, t_vals[pick], t_vals[3]
        trace.append(t_vals[0])
        lr *= 1.2
    return theta, lr


def optimize_theta_direct(target: RegionImage, reference: RegionImage, steps: int = 300,
                          learning_rate: float = 1.0, bins: int = DEFAULT_BINS,
                          warmup_steps: int | None = None, min_learning_rate: float = 1e-10):
    """Gradient descent on L_total over the theta maps of one frame.

    Regions must already be emissivity-normalized. ``learning_rate`` is per
    pixel: the raw gradient is scaled by the mask area so the step does not
    shrink as regions grow. A step that would raise the objective is retried
    at half the rate; accepted steps grow the rate by 20%.

    The first ``warmup_steps`` (default: half of ``steps``) descend on the
    statistical term alone. The KL term has no useful gradient while the two
    histograms do not overlap, and aligning mean and spread first brings them
    together. The remaining steps descend on the full loss.

    Returns (CurveParams, trace); the trace holds the soft-binned L_total at
    theta = 0 and after every accepted step. The returned theta is the best
    point of the trace, so its loss never exceeds the starting loss.
    """
    mask = target.mask.bitmap
    plane = _masked_plane(target)
    soft = SoftTarget(reference.values, bins)
    if warmup_steps is None:
        warmup_steps = steps // 2
    warmup_steps = min(warmup_steps, steps)
    theta0 = np.zeros((N_ITER, *plane.shape))
    start = theta_loss_and_grad(plane, mask, theta0, soft)[0]
    if not np.isfinite(start):
        raise OptimizationError("non-finite loss at step 0")
    trace = [start]
    theta, _ = _descend(plane, mask, theta0, soft, warmup_steps, learning_rate, True,
                        min_learning_rate, trace)
    theta, _ = _descend(plane, mask, theta, soft, steps - warmup_steps, learning_rate, False,
                        min_learning_rate, trace)
    if trace[-1] > start:
        theta = theta0
        trace.append(start)
    return CurveParams(theta), trace


def _flat_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def sample_loss_and_grads(target: RegionImage, reference: RegionImage, weights: NetworkWeights,
                          soft: SoftTarget | None = None, bins: int = DEFAULT_BINS, stat_only: bool = False):
    """Soft L_total for one normalized pair through the full network, plus parameter gradients."""
    soft = soft or SoftTarget(reference.values, bins)
    mask = target.mask.bitmap
    t_plane = _masked_plane(target)
    r_plane = _masked_plane(reference)
    theta, cache = network_forward(t_plane, r_plane, weights, return_cache=True,
                                   target_mask=mask, reference_mask=reference.mask.bitmap)
    total, stat, hist, g_theta = theta_loss_and_grad(t_plane, mask, theta, soft, stat_only)
    grads = network_backward(g_theta, cache, weights)
    return total, grads


def train(dataset, cfg: TrainConfig = TrainConfig(), weights: NetworkWeights | None = None) -> TrainResult:
    """SGD with momentum on mean L_total over (target, reference) pairs.

    Pairs must be emissivity-normalized. Sample order is reshuffled every
    epoch from ``cfg.seed``; identical inputs give bit-identical weights.
    """
    if not dataset:
        raise InputError("training dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    fresh = weights is None
    weights = (weights or NetworkWeights.initialize(cfg.seed)).copy()
    if fresh or not level_stats_set(weights):
        fit_level_stats(weights, dataset)
    softs = [SoftTarget(ref.values, cfg.bins) for _, ref in dataset]
    velocity = {k: np.zeros_like(v) for k, v in weights.params.items()}
    second = {k: np.zeros_like(v) for k, v in weights.params.items()}
    updates = 0
    epoch_losses = []
    seen = 0
    limit = cfg.max_samples if cfg.max_samples is not None else cfg.epochs * len(dataset)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), cfg.batch):
            if seen >= limit:
                break
            idx = order[start:start + cfg.batch][: limit - seen]
            acc = {k: np.zeros_like(v) for k, v in weights.params.items()}
            for i in idx:
                tgt, ref = dataset[i]
                loss, grads = sample_loss_and_grads(tgt, ref, weights, softs[i], cfg.bins,
                                                    stat_only=seen < cfg.warmup_samples)
                if not np.isfinite(loss):
                    raise OptimizationError(
                        f"non-finite training loss at epoch {epoch}, sample {int(i)} "
                        f"(updates so far: {seen})"
                    )
                losses.append(loss)
                for k in acc:
                    acc[k] += grads[k]
            for k in acc:
                acc[k] /= len(idx)
            if cfg.clip_norm is not None:
                norm = _flat_norm(acc)
                if norm > cfg.clip_norm or (cfg.normalize and norm > 0):
                    for k in acc:
                        acc[k] *= cfg.clip_norm / norm
            lr = cfg.learning_rate
            if cfg.schedule == "cosine":
                lr *= 0.5 * (1.0 + np.cos(np.pi * seen / limit))
            updates += 1
            for k, g in acc.items():
                if cfg.optimizer == "adam":
                    velocity[k] = cfg.momentum * velocity[k] + (1.0 - cfg.momentum) * g
                    second[k] = ADAM_BETA2 * second[k] + (1.0 - ADAM_BETA2) * g * g
                    m_hat = velocity[k] / (1.0 - cfg.momentum ** updates)
                    v_hat = second[k] / (1.0 - ADAM_BETA2 ** updates)
                    weights.params[k] = weights.params[k] - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
                else:
                    velocity[k] = cfg.momentum * velocity[k] - lr * g
                    weights.params[k] = weights.params[k] + velocity[k]
            seen += len(idx)
        if losses:
            epoch_losses.append(float(np.mean(losses)))
            log.info("epoch %d mean loss %.6g", epoch, epoch_losses[-1])
        if seen >= limit:
            break
    final = mean_dataset_loss(dataset, weights, cfg.bins)
    return TrainResult(weights, final, epoch_losses, seen)


def level_stats_set(weights: NetworkWeights) -> bool:
    p = weights.params
    return not (np.all(p["stats.level_center"] == 0.0) and np.all(p["stats.level_scale"] == 1.0))


def fit_level_stats(weights: NetworkWeights, dataset, floor: float = 1e-3) -> None:
    """Set the level-feature buffers to the mean and spread of the dataset's region means."""
    lv = np.array([
        region_levels(_masked_plane(t), _masked_plane(r), t.mask.bitmap, r.mask.bitmap) for t, r in dataset
    ])
    weights.params["stats.level_center"] = lv.mean(axis=0)
    weights.params["stats.level_scale"] = np.maximum(lv.std(axis=0), floor)


def predict_theta(target: RegionImage, reference: RegionImage, weights: NetworkWeights) -> CurveParams:
    theta = network_forward(_masked_plane(target), _masked_plane(reference), weights,
                            target_mask=target.mask.bitmap, reference_mask=reference.mask.bitmap)
    return CurveParams(np.clip(theta, -1.0, 1.0))


def apply_curve(target: RegionImage, params: CurveParams) -> RegionImage:
    return target.with_plane(curve_forward(_masked_plane(target), params))


def enhance_normalized(target: RegionImage, reference: RegionImage, weights: NetworkWeights) -> RegionImage:
    """Inference on already-normalized regions."""
    return apply_curve(target, predict_theta(target, reference, weights))


def enhance_region(target: RegionImage, reference: RegionImage, weights: NetworkWeights) -> RegionImage:
    """Emissivity-normalize both regions, predict theta and apply the curve to the target."""
    t = emissivity_normalize(target.with_plane(target.plane))
    r = emissivity_normalize(reference.with_plane(reference.plane))
    return enhance_normalized(t, r, weights)


def mean_dataset_loss(dataset, weights: NetworkWeights, bins: int = DEFAULT_BINS) -> float:
    """Mean hard-binned L_total of network enhancement over the dataset."""
    vals = [loss_total(enhance_normalized(t, r, weights), r, bins)[0] for t, r in dataset]
    return float(np.mean(vals))
