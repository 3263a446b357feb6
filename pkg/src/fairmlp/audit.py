"""Post-hoc fairness/accuracy metrics, covering-number generalization
bounds, and the disparate-impact non-coverability counterexample.

Soft fairness gaps are averaged over stratified batches of the
evaluation set (the multi-batch empirical form); hard metrics come from
0.5-thresholded predictions over the whole set. The bound calculator
works in log space: raw covering numbers overflow for any realistic
parameter count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fairloss
from .data import Dataset, epoch_batches
from .errors import DataError, ParameterError
from .fairloss import Batch
from .model import MlpParams, forward, predict_hard
from .numcore import Rng

RATE_FLOOR = 1e-7


@dataclass
class MetricsReport:
    """Fairness and accuracy summary of one model on one dataset."""

    accuracy: float
    dp_soft: float
    dp_hard: float
    fpr_by_group: dict
    fnr_by_group: dict
    eo_sum_soft: float
    eo_max_soft: float
    di_ratio: float
    p_percent: float
    q_mean: float
    n: int
    n_group1: int
    n_group0: int

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["fpr_by_group"] = {str(k): v for k, v in self.fpr_by_group.items()}
        out["fnr_by_group"] = {str(k): v for k, v in self.fnr_by_group.items()}
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "MetricsReport":
        raw = dict(raw)
        raw["fpr_by_group"] = {int(k): v for k, v in raw["fpr_by_group"].items()}
        raw["fnr_by_group"] = {int(k): v for k, v in raw["fnr_by_group"].items()}
        return cls(**raw)


def _conditional_rate(pred: np.ndarray, cond: np.ndarray) -> float:
    n = cond.sum()
    if n == 0:
        raise DataError("empty conditioning cell in evaluation")
    return float(pred[cond].sum() / n)


def evaluate(params: MlpParams, dataset: Dataset, S: int,
             seed: int = 0) -> MetricsReport:
    """Full metrics report; deterministic given (params, dataset, S, seed).

    ``S`` is the batch size for the soft multi-batch gap estimates; it is
    clamped to the dataset size, so small evaluation sets degrade to a
    single whole-set batch.
    """
    a, y = dataset.a, dataset.y
    if a.sum() < 1 or (1 - a).sum() < 1:
        raise DataError("evaluation set must contain both sensitive groups")
    if y.sum() < 1 or (1 - y).sum() < 1:
        raise DataError("evaluation set must contain both label classes")

    p = forward(params, dataset.X).p
    yhat = predict_hard(p)

    s_eff = min(S, dataset.n)
    batches = epoch_batches(a, y, s_eff, Rng(seed),
                            need_groups=True, need_classes=True)
    dp_vals, eo_sum_vals, eo_max_vals, q_vals = [], [], [], []
    for idx in batches:
        b = Batch(p[idx], a[idx], y[idx])
        dp_vals.append(fairloss.const_dp(b))
        eo_sum_vals.append(fairloss.const_eo(b, "sum"))
        eo_max_vals.append(fairloss.const_eo(b, "max"))
        q_vals.append(fairloss.q_mean(b))

    g1, g0 = a == 1, a == 0
    pos1 = max(_conditional_rate(yhat, g1), RATE_FLOOR)
    pos0 = max(_conditional_rate(yhat, g0), RATE_FLOOR)
    di_ratio = min(pos1 / pos0, pos0 / pos1)

    fpr_by_group, fnr_by_group = {}, {}
    for g, mask in ((1, g1), (0, g0)):
        fpr_by_group[g] = _conditional_rate(yhat, mask & (y == 0))
        fnr_by_group[g] = _conditional_rate(1 - yhat, mask & (y == 1))

    return MetricsReport(
        accuracy=float((yhat == y).mean()),
        dp_soft=float(np.mean(dp_vals)),
        dp_hard=abs(_conditional_rate(yhat, g1) - _conditional_rate(yhat, g0)),
        fpr_by_group=fpr_by_group,
        fnr_by_group=fnr_by_group,
        eo_sum_soft=float(np.mean(eo_sum_vals)),
        eo_max_soft=float(np.mean(eo_max_vals)),
        di_ratio=float(di_ratio),
        p_percent=float(100.0 * di_ratio),
        q_mean=float(np.mean(q_vals)),
        n=dataset.n,
        n_group1=int(g1.sum()),
        n_group0=int(g0.sum()),
    )


# ---------------------------------------------------------------------------
# Generalization bound calculator
# ---------------------------------------------------------------------------

@dataclass
class BoundInputs:
    """Network capacity description for the bound formulas.

    R hidden layers, D parameters, per-layer l1 weight bound W, output
    bound L, batch size S, batch count B, confidence delta, constant C,
    and the covering radius divisor ('S' or '2S').
    """

    R: int
    D: int
    W: float
    L: float
    S: int
    B: int
    delta: float = 0.1
    C: float = 4.0
    radius_divisor: str = "S"

    def __post_init__(self):
        for name in ("R", "D", "W", "L", "S", "B", "C"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ParameterError("delta must be in (0, 1)")
        if self.radius_divisor not in ("S", "2S"):
            raise ParameterError("radius_divisor must be 'S' or '2S'")

    @property
    def divisor_value(self) -> float:
        return float(self.S) if self.radius_divisor == "S" else 2.0 * self.S


def _log_ceil_count(inner: float, D: int) -> float:
    # D * ln(ceil(inner)); inner may be astronomically large, so stay in logs
    if inner <= 1.0:
        return 0.0
    if inner < 1e15:
        return D * math.log(math.ceil(inner))
    return D * math.log(inner)


def covering_number(inputs: BoundInputs, mu: float) -> float:
    """log of the network-class covering count ceil(D*L*S*(2W)^(R+1)/mu)^D."""
    if mu <= 0:
        raise ParameterError("mu must be > 0")
    inner = inputs.D * inputs.L * inputs.S * (2.0 * inputs.W) ** (inputs.R + 1) / mu
    return _log_ceil_count(inner, inputs.D)


def _log_covering_at(inputs: BoundInputs, mu: float) -> float:
    # covering count at ball radius mu / divisor
    inner = (inputs.D * inputs.L * inputs.divisor_value
             * (2.0 * inputs.W) ** (inputs.R + 1) / mu)
    return _log_ceil_count(inner, inputs.D)


@dataclass
class OmegaResult:
    """Complexity term mu + sqrt(2 log N / B), closed form and grid min."""

    closed_form: float
    grid: float
    mu_closed: float
    mu_grid: float


def _omega_at(inputs: BoundInputs, mu: float) -> float:
    return mu + math.sqrt(2.0 * _log_covering_at(inputs, mu) / inputs.B)


def omega(inputs: BoundInputs, grid_points: int = 400) -> OmegaResult:
    """Evaluate the complexity term at mu = 1/sqrt(B) and minimized over a
    log-spaced mu grid in [1e-6, 1]; the grid always contains the
    closed-form point, so grid <= closed_form."""
    mu_closed = 1.0 / math.sqrt(inputs.B)
    closed = _omega_at(inputs, mu_closed)
    grid = np.logspace(-6.0, 0.0, grid_points).tolist()
    if 1e-6 <= mu_closed <= 1.0:
        grid.append(mu_closed)
    best_mu, best = mu_closed, closed
    for mu in grid:
        val = _omega_at(inputs, mu)
        if val < best:
            best_mu, best = mu, val
    return OmegaResult(closed_form=closed, grid=best, mu_closed=mu_closed,
                       mu_grid=best_mu)


def full_bound(empirical_mean: float, inputs: BoundInputs) -> float:
    """Upper bound on the expected constraint value:
    empirical mean + 2*Omega + C*sqrt(log(1/delta)/B), with Omega at the
    closed-form mu = 1/sqrt(B)."""
    om = omega(inputs).closed_form
    slack = inputs.C * math.sqrt(math.log(1.0 / inputs.delta) / inputs.B)
    return float(empirical_mean + 2.0 * om + slack)


def bound_sweep(inputs: BoundInputs, b_values,
                empirical_mean: float = 0.0) -> list[dict]:
    """Rows (B, omega_closed, omega_grid, full_bound) over a range of B."""
    rows = []
    for b in b_values:
        bi = BoundInputs(R=inputs.R, D=inputs.D, W=inputs.W, L=inputs.L,
                         S=inputs.S, B=int(b), delta=inputs.delta, C=inputs.C,
                         radius_divisor=inputs.radius_divisor)
        om = omega(bi)
        rows.append({
            "B": int(b),
            "omega_closed": om.closed_form,
            "omega_grid": om.grid,
            "full_bound": full_bound(empirical_mean, bi),
        })
    return rows


def model_bound_inputs(params: MlpParams, S: int, B: int, L: float = 1.0,
                       delta: float = 0.1, C: float = 4.0,
                       radius_divisor: str = "S") -> BoundInputs:
    """BoundInputs read off a trained network: R = 2 hidden layers,
    D = parameter count, W = max per-layer l1 norm. L (the output bound)
    depends on the input scale and must be supplied."""
    return BoundInputs(R=2, D=params.n_params,
                       W=max(params.layer_l1_norms()),
                       L=L, S=S, B=B, delta=delta, C=C,
                       radius_divisor=radius_divisor)


# ---------------------------------------------------------------------------
# Disparate-impact non-coverability counterexample
# ---------------------------------------------------------------------------

@dataclass
class CounterexamplePair:
    """Two classifiers within sup-distance mu whose DI values differ by
    a constant 0.5 no matter how small mu is."""

    a: np.ndarray
    h: np.ndarray
    h_hat: np.ndarray
    mu: float
    sup_distance: float
    const_h: float
    const_h_hat: float
    gap: float

    def __post_init__(self):
        if self.sup_distance > self.mu:
            raise ParameterError("construction violated the sup-distance bound")
        if self.gap < 0.5:
            raise ParameterError("construction lost the constant DI gap")


def di_counterexample(mu: float) -> CounterexamplePair:
    """Emit h = (t, t) and h_hat = (t, 2t) on one protected / one
    unprotected example, with t = min(mu, 0.25): the sup-distance is t
    but the (unfloored) DI values are -1 and -0.5, a gap of 0.5 for
    every mu > 0. This is why no sup-norm cover of the DI constraint
    class can exist."""
    if mu <= 0:
        raise ParameterError("mu must be > 0")
    t = min(mu, 0.25)
    a = np.asarray([1, 0])
    h = np.asarray([t, t])
    h_hat = np.asarray([t, 2.0 * t])
    y = np.zeros(2, dtype=np.int64)
    const_h = fairloss.const_di(Batch(h, a, y), mean_floor=0.0)
    const_h_hat = fairloss.const_di(Batch(h_hat, a, y), mean_floor=0.0)
    return CounterexamplePair(
        a=a, h=h, h_hat=h_hat, mu=mu,
        sup_distance=float(np.max(np.abs(h - h_hat))),
        const_h=const_h, const_h_hat=const_h_hat,
        gap=abs(const_h - const_h_hat),
    )


def di_gap_demo(mu: float, delta: float) -> dict:
    """Secondary demo on 50/50 groups of 100: the protected group
    predicts 1, the other predicts delta vs mu; reports the DI values and
    their gap without asserting any bound on it."""
    if mu <= 0 or not (0.0 < delta < 1.0):
        raise ParameterError("need mu > 0 and delta in (0, 1)")
    a = np.asarray([1] * 50 + [0] * 50)
    y = np.zeros(100, dtype=np.int64)
    h = np.asarray([1.0 - 1e-12] * 50 + [delta] * 50)
    h_hat = np.asarray([1.0 - 1e-12] * 50 + [min(mu, 1.0 - 1e-12)] * 50)
    const_h = fairloss.const_di(Batch(h, a, y), mean_floor=0.0)
    const_h_hat = fairloss.const_di(Batch(h_hat, a, y), mean_floor=0.0)
    return {
        "mu": mu, "delta": delta,
        "sup_distance": float(np.max(np.abs(h - h_hat))),
        "const_h": const_h, "const_h_hat": const_h_hat,
        "gap": abs(const_h - const_h_hat),
    }
