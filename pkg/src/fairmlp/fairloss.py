"""Batch-level fairness constraints and performance losses with exact
gradients in the prediction probabilities.

Every quantity here is a function of one fixed-size batch
(p, a, y): per-example class-1 probabilities, binary sensitive
attribute (1 = protected group), and binary labels. The constraints are
non-decomposable: they only make sense across a batch that contains
both groups, which is why training happens on stratified mini-batches.

Value conventions:
  demographic parity gap      in [0, 1], 0 = parity
  false-pos/false-neg gaps    in [0, 1] each (group-size denominators)
  equalized odds (sum / max)  in [0, 2] / [0, 1]
  disparate impact            -min(r, 1/r) in [-1, 0), -1 = equal rates
  q-mean                      root of summed squared per-class errors

Subgradient conventions (deterministic training): 0 at absolute-value
kinks, first branch at min/max ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatchError, ParameterError, ShapeError

# Probabilities are clamped to this band after the softmax so that logs
# and ratio denominators stay finite.
PROB_CLAMP = 1e-7

# Floor applied to group-mean denominators inside the disparate-impact
# ratio; without it the ratio is not Lipschitz and gradients blow up.
DI_MEAN_FLOOR = 1e-7

DP = "dp"
EO_SUM = "eo_sum"
EO_MAX = "eo_max"
DI = "di"
DP_MULTI = "dp_multi"

CONSTRAINT_KINDS = (DP, EO_SUM, EO_MAX, DI, DP_MULTI)


@dataclass(frozen=True)
class ConstraintKind:
    """A fairness constraint family plus its relaxation parameter.

    DP/EO/DP_MULTI carry a slack epsilon >= 0; DI carries the p%-rule
    threshold p_percent in (0, 100], which enters the constraint loss as
    epsilon = -p_percent/100.
    """

    kind: str
    epsilon: float | None = None
    p_percent: float | None = None

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ParameterError(f"unknown constraint kind {self.kind!r}")
        if self.kind == DI:
            if self.p_percent is None or not (0.0 < self.p_percent <= 100.0):
                raise ParameterError("DI requires p_percent in (0, 100]")
            if self.epsilon is not None:
                raise ParameterError("DI takes p_percent, not epsilon")
        else:
            if self.epsilon is None or self.epsilon < 0.0:
                raise ParameterError(f"{self.kind} requires epsilon >= 0")
            if self.p_percent is not None:
                raise ParameterError(f"{self.kind} takes epsilon, not p_percent")

    @classmethod
    def dp(cls, epsilon: float) -> "ConstraintKind":
        return cls(DP, epsilon=epsilon)

    @classmethod
    def eo_sum(cls, epsilon: float) -> "ConstraintKind":
        return cls(EO_SUM, epsilon=epsilon)

    @classmethod
    def eo_max(cls, epsilon: float) -> "ConstraintKind":
        return cls(EO_MAX, epsilon=epsilon)

    @classmethod
    def di(cls, p_percent: float) -> "ConstraintKind":
        return cls(DI, p_percent=p_percent)

    @classmethod
    def dp_multi(cls, epsilon: float) -> "ConstraintKind":
        return cls(DP_MULTI, epsilon=epsilon)

    @property
    def slack(self) -> float:
        """The epsilon subtracted in the constraint loss (-p/100 for DI)."""
        if self.kind == DI:
            return -self.p_percent / 100.0
        return self.epsilon


@dataclass
class Batch:
    """One fixed-size batch (p, a, y) on which constraints are computed."""

    p: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.a = np.asarray(self.a)
        self.y = np.asarray(self.y)
        if not (self.p.shape == self.a.shape == self.y.shape) or self.p.ndim != 1:
            raise ShapeError("p, a, y must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.p)):
            raise ShapeError("probabilities must be finite")
        if np.any(self.p <= 0.0) or np.any(self.p >= 1.0):
            raise ParameterError("probabilities must lie strictly in (0, 1)")
        if not np.isin(self.a, (0, 1)).all() or not np.isin(self.y, (0, 1)).all():
            raise ParameterError("a and y must be binary")
        self.a = self.a.astype(np.float64)
        self.y = self.y.astype(np.float64)
        if self.a.sum() < 1 or (1.0 - self.a).sum() < 1:
            raise DegenerateBatchError("batch must contain both sensitive groups")

    @property
    def size(self) -> int:
        return self.p.shape[0]


@dataclass
class MultiGroupBatch:
    """Batch with an m-way group index instead of a binary attribute."""

    p: np.ndarray
    group: np.ndarray
    m: int

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.group = np.asarray(self.group, dtype=np.int64)
        if self.p.shape != self.group.shape or self.p.ndim != 1:
            raise ShapeError("p and group must be 1-D arrays of equal length")
        if self.m < 2:
            raise ParameterError("m must be >= 2")
        if np.any(self.group < 0) or np.any(self.group >= self.m):
            raise ParameterError("group indices must lie in [0, m)")
        for j in range(self.m):
            if not np.any(self.group == j):
                raise DegenerateBatchError(f"group {j} missing from batch")


def _group_means(p: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    n1 = a.sum()
    n0 = (1.0 - a).sum()
    return float((p * a).sum() / n1), float((p * (1.0 - a)).sum() / n0)


def const_dp(batch: Batch) -> float:
    """Demographic-parity gap: |mean p over a=1 - mean p over a=0|."""
    m1, m0 = _group_means(batch.p, batch.a)
    return abs(m1 - m0)


def fpr_gap(batch: Batch) -> float:
    """|sum p(1-y)a / sum a  -  sum p(1-y)(1-a) / sum (1-a)|.

    Denominators are full group sizes, not negative-label counts.
    """
    m1, m0 = _group_means(batch.p * (1.0 - batch.y), batch.a)
    return abs(m1 - m0)


def fnr_gap(batch: Batch) -> float:
    """|sum (1-p)y a / sum a  -  sum (1-p)y(1-a) / sum (1-a)|."""
    m1, m0 = _group_means((1.0 - batch.p) * batch.y, batch.a)
    return abs(m1 - m0)


def const_eo(batch: Batch, variant: str = "sum") -> float:
    """Equalized-odds constraint: fpr+fnr ('sum') or max(fpr, fnr) ('max')."""
    fpr = fpr_gap(batch)
    fnr = fnr_gap(batch)
    if variant == "sum":
        return fpr + fnr
    if variant == "max":
        return max(fpr, fnr)
    raise ParameterError(f"unknown EO variant {variant!r}")


def const_di(batch: Batch, mean_floor: float = DI_MEAN_FLOOR) -> float:
    """Disparate-impact constraint -min(r, 1/r) with r the ratio of group
    mean probabilities (a=1 over a=0); equals -1 iff the rates match.

    ``mean_floor`` clamps each ratio denominator; pass 0 for the exact
    unclamped ratio (used by the non-coverability counterexample).
    """
    m1, m0 = _group_means(batch.p, batch.a)
    r = m1 / max(m0, mean_floor) if mean_floor > 0 else m1 / m0
    r_inv = m0 / max(m1, mean_floor) if mean_floor > 0 else m0 / m1
    return -min(r, r_inv)


def const_dp_multi(batch: MultiGroupBatch) -> float:
    """Sum over groups j of the one-vs-rest demographic-parity gap."""
    total = 0.0
    for j in range(batch.m):
        aj = (batch.group == j).astype(np.float64)
        m1, m0 = _group_means(batch.p, aj)
        total += abs(m1 - m0)
    return total


def constraint_value(batch: Batch, kind: ConstraintKind) -> float:
    """Dispatch the raw constraint value for a binary-attribute batch."""
    if kind.kind == DP:
        return const_dp(batch)
    if kind.kind == EO_SUM:
        return const_eo(batch, "sum")
    if kind.kind == EO_MAX:
        return const_eo(batch, "max")
    if kind.kind == DI:
        return const_di(batch)
    if kind.kind == DP_MULTI:
        mb = MultiGroupBatch(batch.p, batch.a.astype(np.int64), 2)
        return const_dp_multi(mb)
    raise ParameterError(f"unknown constraint kind {kind.kind!r}")


def constraint_loss(const_values, kind: ConstraintKind) -> float:
    """Mean constraint value over batches minus the slack epsilon.

    Negative values mean the constraint is satisfied with room to spare.
    """
    values = np.asarray(const_values, dtype=np.float64)
    if values.size == 0:
        raise ParameterError("need at least one constraint value")
    return float(values.mean() - kind.slack)


def cross_entropy(p: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy -y log p - (1-y) log(1-p)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError("p and y must have equal length")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-y * np.log(p) - (1.0 - y) * np.log(1.0 - p)))


def q_mean(batch: Batch, include_class_factor: bool = False) -> float:
    """Batch q-mean loss: sqrt(u^2 + v^2) where u, v are the per-class
    soft error rates 1 - sum(y p)/sum(y) and 1 - sum((1-y)(1-p))/sum(1-y).

    With ``include_class_factor`` the bracket is halved (the 1/m-class
    normalization), which scales the result by exactly 1/sqrt(2).
    """
    u, v = _qmean_terms(batch)
    bracket = u * u + v * v
    if include_class_factor:
        bracket /= 2.0
    return float(np.sqrt(bracket))


def _qmean_terms(batch: Batch) -> tuple[float, float]:
    n_pos = batch.y.sum()
    n_neg = (1.0 - batch.y).sum()
    if n_pos < 1 or n_neg < 1:
        raise DegenerateBatchError("q-mean needs both classes in the batch")
    u = 1.0 - float((batch.y * batch.p).sum() / n_pos)
    v = 1.0 - float(((1.0 - batch.y) * (1.0 - batch.p)).sum() / n_neg)
    return u, v


# ---------------------------------------------------------------------------
# Analytic gradients with respect to p
# ---------------------------------------------------------------------------

def _dp_direction(a: np.ndarray) -> np.ndarray:
    # d/dp_i of (mean over a=1 - mean over a=0)
    return a / a.sum() - (1.0 - a) / (1.0 - a).sum()


def grad_wrt_p(kind, batch: Batch, include_class_factor: bool = False) -> np.ndarray:
    """Exact (sub)gradient of a constraint or loss in the probabilities.

    ``kind`` is one of 'dp', 'eo_sum', 'eo_max', 'di', 'dp_multi', 'ce',
    'qmean', or a ConstraintKind. At |.| kinks the subgradient 0 is
    returned; at min/max ties the first branch is differentiated.
    """
    if isinstance(kind, ConstraintKind):
        kind = kind.kind
    p, a, y = batch.p, batch.a, batch.y

    if kind == DP:
        m1, m0 = _group_means(p, a)
        return np.sign(m1 - m0) * _dp_direction(a)

    if kind in (EO_SUM, EO_MAX):
        d = _dp_direction(a)
        m1f, m0f = _group_means(p * (1.0 - y), a)
        g_fpr = np.sign(m1f - m0f) * (1.0 - y) * d
        m1n, m0n = _group_means((1.0 - p) * y, a)
        g_fnr = np.sign(m1n - m0n) * (-y) * d
        if kind == EO_SUM:
            return g_fpr + g_fnr
        fpr = abs(m1f - m0f)
        fnr = abs(m1n - m0n)
        return g_fpr if fpr >= fnr else g_fnr

    if kind == DI:
        m1, m0 = _group_means(p, a)
        m1f = max(m1, DI_MEAN_FLOOR)
        m0f = max(m0, DI_MEAN_FLOOR)
        dm1 = a / a.sum()
        dm0 = (1.0 - a) / (1.0 - a).sum()
        # derivative of a floored denominator is zero where the floor binds
        dm1f = dm1 if m1 > DI_MEAN_FLOOR else np.zeros_like(dm1)
        dm0f = dm0 if m0 > DI_MEAN_FLOOR else np.zeros_like(dm0)
        r = m1 / m0f
        r_inv = m0 / m1f
        if r <= r_inv:  # first branch: const = -m1/m0f
            return -(dm1 * m0f - m1 * dm0f) / (m0f * m0f)
        return -(dm0 * m1f - m0 * dm1f) / (m1f * m1f)

    if kind == DP_MULTI:
        mb = MultiGroupBatch(p, a.astype(np.int64), 2)
        return grad_dp_multi_wrt_p(mb)

    if kind == "ce":
        pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
        g = (-y / pc + (1.0 - y) / (1.0 - pc)) / p.shape[0]
        # clamped coordinates contribute a constant to the loss
        g[(p < PROB_CLAMP) | (p > 1.0 - PROB_CLAMP)] = 0.0
        return g

    if kind == "qmean":
        u, v = _qmean_terms(batch)
        q = q_mean(batch, include_class_factor)
        if q == 0.0:
            return np.zeros_like(p)
        du = -y / y.sum()
        dv = (1.0 - y) / (1.0 - y).sum()
        scale = 0.5 if include_class_factor else 1.0
        return scale * (u * du + v * dv) / q

    raise ParameterError(f"unknown gradient kind {kind!r}")


def grad_dp_multi_wrt_p(batch: MultiGroupBatch) -> np.ndarray:
    """Gradient of the m-group summed one-vs-rest parity constraint."""
    g = np.zeros_like(batch.p)
    for j in range(batch.m):
        aj = (batch.group == j).astype(np.float64)
        m1, m0 = _group_means(batch.p, aj)
        g += np.sign(m1 - m0) * _dp_direction(aj)
    return g
