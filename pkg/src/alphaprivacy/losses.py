"""Training losses: distortion measures, adversary cross-entropy, and the
releaser's distortion-minus-weighted-alpha-entropy objective.

Scalars are batch means in nats (cross-entropies) or data units
(distortions); gradients carry the same batch normalization so they can be
fed straight into the network backward passes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .measures import ZERO_PROB, _check_alpha, batch_sequence_arimoto_entropy_grad

DISTORTION_KINDS = ("p_norm", "composite_img", "ts_l2")


@dataclass
class DistortionSpec:
    """Which release-vs-original distortion to charge the releaser.

    ``p_norm`` is the per-sample (1/T) p-norm of the flattened difference;
    ``composite_img`` adds the utility classifier's cross-entropy to an L1
    norm; ``ts_l2`` is the p = 2 special case used for time series.
    ``utility_weight`` scales the classifier term of the composite.
    """

    kind: str = "ts_l2"
    p: float = 2.0
    utility_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise ValidationError(f"unknown distortion kind {self.kind!r}")
        if self.p < 1.0:
            raise ValidationError(f"p-norms need p >= 1, got {self.p}")

    @property
    def norm_order(self):
        return 1.0 if self.kind == "composite_img" else (2.0 if self.kind == "ts_l2" else self.p)

    @property
    def needs_utility(self):
        return self.kind == "composite_img"


def _check_batch_pair(released, target):
    released = np.asarray(released, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if released.shape != target.shape or released.ndim != 3:
        raise ValidationError(
            f"released/target must share a (B, T, d) shape, got "
            f"{released.shape} vs {target.shape}"
        )
    return released, target


def compute_distortion(spec: DistortionSpec, released, target, utility_loss=None):
    """Batch-mean distortion between released and original data.

    For the composite measure the caller supplies the utility network's
    cross-entropy as ``utility_loss``; it is required there and rejected
    elsewhere.
    """
    released, target = _check_batch_pair(released, target)
    if spec.needs_utility and utility_loss is None:
        raise ValidationError("composite_img distortion requires utility_loss")
    if not spec.needs_utility and utility_loss is not None:
        raise ValidationError(f"{spec.kind} distortion does not take utility_loss")
    value = _norm_distortion(spec, released, target)
    if spec.needs_utility:
        value += spec.utility_weight * float(utility_loss)
    return value


def _norm_distortion(spec, released, target):
    nsteps = released.shape[1]
    diff = (released - target).reshape(released.shape[0], -1)
    p = spec.norm_order
    norms = np.abs(diff).sum(axis=1) if p == 1.0 else (np.abs(diff) ** p).sum(axis=1) ** (1.0 / p)
    return float(norms.mean() / nsteps)


def norm_distortion_grad(spec: DistortionSpec, released, target):
    """Gradient of the norm part of the distortion w.r.t. ``released``.

    Zero-difference samples get a zero (sub)gradient.
    """
    released, target = _check_batch_pair(released, target)
    nbatch, nsteps = released.shape[0], released.shape[1]
    diff = released - target
    flat = diff.reshape(nbatch, -1)
    p = spec.norm_order
    scale = 1.0 / (nbatch * nsteps)
    if p == 1.0:
        return np.sign(diff) * scale
    norms = (np.abs(flat) ** p).sum(axis=1) ** (1.0 / p)
    safe = np.where(norms > 0.0, norms, 1.0)
    g = np.sign(flat) * np.abs(flat) ** (p - 1.0) / safe[:, None] ** (p - 1.0)
    g[norms == 0.0] = 0.0
    return g.reshape(released.shape) * scale


@dataclass
class LossValue:
    """A scalar loss plus the gradients the caller chains onward."""

    value: float
    grad_released: Optional[np.ndarray] = None
    grad_posteriors: Optional[np.ndarray] = None
    clamped: int = 0


def adversary_loss(posterior_probs, labels) -> LossValue:
    """Mean negative log-likelihood of the true private labels.

    ``posterior_probs`` is the adversary's (B, T, |X|) softmax output and
    ``labels`` the (B, T) integers.  Probabilities of true labels are
    clamped at 1e-15 (counted in ``clamped``) rather than erroring, so an
    overconfident adversary keeps a finite loss.  The returned gradient is
    w.r.t. the posterior probabilities; push it back through the softmax.
    """
    probs = np.asarray(posterior_probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 3 or labels.shape != probs.shape[:2]:
        raise ValidationError(
            f"posteriors (B, T, K) and labels (B, T) mismatch: "
            f"{probs.shape} vs {labels.shape}"
        )
    if labels.min() < 0 or labels.max() >= probs.shape[2]:
        raise ValidationError("labels outside the private alphabet")
    nbatch, nsteps = probs.shape[0], probs.shape[1]
    bidx, tidx = np.meshgrid(np.arange(nbatch), np.arange(nsteps), indexing="ij")
    picked = probs[bidx, tidx, labels]
    clamped = int((picked < ZERO_PROB).sum())
    safe = np.maximum(picked, ZERO_PROB)
    value = float(-np.log(safe).mean())
    grad = np.zeros_like(probs)
    grad[bidx, tidx, labels] = -1.0 / (safe * nbatch * nsteps)
    return LossValue(value=value, grad_posteriors=grad, clamped=clamped)


def releaser_loss(
    released,
    target,
    posterior_probs,
    spec: DistortionSpec,
    lam,
    alpha,
    utility_loss=None,
) -> LossValue:
    """Distortion minus lambda times the adversary's sequence alpha-entropy.

    Returns the scalar plus two gradient pieces: ``grad_released`` covers
    the norm distortion term directly, ``grad_posteriors`` the entropy
    term.  The entropy gradient must be chained through the adversary
    network into the release (and the composite's utility term through the
    utility network) by the caller, since those paths depend on networks
    this function never sees.
    """
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    alpha = _check_alpha(alpha)
    probs = np.asarray(posterior_probs, dtype=np.float64)
    value = compute_distortion(spec, released, target, utility_loss)
    grad_released = norm_distortion_grad(spec, released, target)
    if lam == 0.0:
        return LossValue(value=value, grad_released=grad_released,
                         grad_posteriors=np.zeros_like(probs))
    entropy, dentropy = batch_sequence_arimoto_entropy_grad(probs, alpha)
    return LossValue(
        value=value - lam * entropy,
        grad_released=grad_released,
        grad_posteriors=-lam * dentropy,
    )
