"""Dense linear algebra, seeded RNG, and the Adam update rule.

Everything here is deterministic: the same seed yields byte-identical
sequences on every platform (PCG64 has a fixed cross-platform stream),
and all array math is float64 numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ShapeError


def matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validating constructor: a finite, row-major float64 2-D array.

    ``data`` may be nested sequences or a flat sequence combined with
    explicit ``rows``/``cols``.
    """
    if rows is not None or cols is not None:
        if rows is None or cols is None:
            raise ParameterError("rows and cols must be given together")
        flat = np.asarray(data, dtype=np.float64).ravel()
        if flat.size != rows * cols:
            raise ShapeError(f"data length {flat.size} != {rows}x{cols}")
        out = flat.reshape(rows, cols)
    else:
        out = np.asarray(data, dtype=np.float64)
        if out.ndim != 2:
            raise ShapeError(f"expected a 2-D array, got ndim={out.ndim}")
    out = np.ascontiguousarray(out)
    if not np.all(np.isfinite(out)):
        raise NumericError("matrix contains NaN or Inf")
    return out


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit shape checking."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("mat_mul operands must be 2-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericError("mat_mul produced non-finite entries")
    return out


class Rng:
    """Seeded random source; identical seeds give identical streams."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, mean: float, std: float, n: int) -> np.ndarray:
        if std < 0:
            raise ParameterError(f"std must be >= 0, got {std}")
        if n < 0:
            raise ParameterError(f"n must be >= 0, got {n}")
        if std == 0:
            return np.full(n, float(mean))
        return self.gen.normal(mean, std, size=n)

    def shuffled(self, values) -> np.ndarray:
        """A permuted copy of ``values``."""
        arr = np.asarray(values).copy()
        self.gen.shuffle(arr)
        return arr

    def choice(self, values, size: int, replace: bool = False) -> np.ndarray:
        return self.gen.choice(np.asarray(values), size=size, replace=replace)


def rng_normal(rng: Rng, mean: float, std: float, n: int) -> np.ndarray:
    """n draws from Normal(mean, std); std == 0 gives a constant sequence."""
    return rng.normal(mean, std, n)


@dataclass
class AdamState:
    """First/second moment accumulators for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def zeros(cls, n: int, beta1: float = 0.9, beta2: float = 0.999,
              eps_hat: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0,
                   beta1=beta1, beta2=beta2, eps_hat=eps_hat)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              lr: float) -> np.ndarray:
    """One bias-corrected Adam update; advances ``state`` in place.

    params <- params - lr * m_hat / (sqrt(v_hat) + eps_hat)
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"params {params.shape}, grads {grads.shape}, state {state.m.shape} "
            "must all match")
    if lr <= 0:
        raise ParameterError(f"lr must be > 0, got {lr}")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    out = params - lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)
    if not np.all(np.isfinite(out)):
        raise NumericError("adam_step produced non-finite parameters")
    return out
