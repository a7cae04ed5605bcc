"""Stage losses as pure functions with analytic gradients.

Each loss returns a ``LossValue`` holding the scalar value and the gradient
with respect to its primary input (same shape as that input). Probabilities
are clamped to [EPS, 1-EPS] before any log. Stage composition is an
unweighted sum; callers normalize components (e.g. regression terms by
positive-anchor count) before composing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-7

STAGE_COMPONENTS = {
    1: ("rpn", "ar", "det"),
    2: ("det", "mask"),
    3: ("rpn", "ar", "det", "mt"),
}


@dataclass(frozen=True, eq=False)
class LossValue:
    value: float
    gradient: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite loss value: {self.value}")


def smooth_l1(x: float) -> LossValue:
    """0.5*x^2 for |x| < 1, |x| - 0.5 otherwise; gradient x or sign(x)."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    if abs(x) < 1.0:
        return LossValue(0.5 * x * x, np.asarray(x))
    return LossValue(abs(x) - 0.5, np.asarray(np.sign(x)))


def binary_cross_entropy(p: float, label: int) -> LossValue:
    """-label*log(p) - (1-label)*log(1-p) with p clamped away from {0,1}."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    p = float(np.clip(p, EPS, 1.0 - EPS))
    value = -label * np.log(p) - (1 - label) * np.log1p(-p)
    grad = -label / p + (1 - label) / (1.0 - p)
    return LossValue(float(value), np.asarray(grad))


def softmax_cross_entropy(logits, label: int, weights=None) -> LossValue:
    """Weighted cross-entropy over logits: -w[label] * log softmax(logits)[label].

    Uses max-subtraction for stability. Absent weights mean all ones.
    Gradient is with respect to the logits: w[label] * (softmax - onehot).
    """
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} classes")
    if weights is None:
        w = 1.0
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != logits.shape:
            raise ValueError(f"weights shape {weights.shape} != logits shape {logits.shape}")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        w = float(weights[label])
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    log_p = shifted - log_z
    value = -w * log_p[label]
    grad = w * np.exp(log_p)
    grad[label] -= w
    return LossValue(float(value), grad)


def mask_bce(pred: np.ndarray, target: np.ndarray) -> LossValue:
    """Mean per-pixel binary cross-entropy between a soft mask and a binary target."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    p = np.clip(pred, EPS, 1.0 - EPS)
    value = np.mean(-target * np.log(p) - (1.0 - target) * np.log1p(-p))
    grad = (-target / p + (1.0 - target) / (1.0 - p)) / pred.size
    return LossValue(float(value), grad)


def compose_stage_loss(stage: int, components: dict[str, float], coefficients=None) -> float:
    """Sum of the components a training stage requires.

    Stage 1 needs {rpn, ar, det}, stage 2 {det, mask}, stage 3
    {rpn, ar, det, mt}. Coefficients default to 1 for every term.
    """
    if stage not in STAGE_COMPONENTS:
        raise ValueError(f"stage must be 1, 2, or 3, got {stage}")
    required = STAGE_COMPONENTS[stage]
    missing = [name for name in required if name not in components]
    if missing:
        raise ValueError(f"stage {stage} missing component(s): {', '.join(missing)}")
    coefficients = coefficients or {}
    return float(sum(coefficients.get(name, 1.0) * components[name] for name in required))
