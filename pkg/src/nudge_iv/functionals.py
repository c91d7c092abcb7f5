"""Bounded outcome functionals h(y) shared by the estimators and the oracle.

The arm-specific ratio machinery is parameterised by a function of the
outcome; the kinds below cover the cases with closed-form Gaussian
expectations (identity, square, threshold indicator) plus an escape hatch
for arbitrary bounded callables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

_HERMITE_NODES, _HERMITE_WEIGHTS = np.polynomial.hermite_e.hermegauss(128)
_HERMITE_WEIGHTS = _HERMITE_WEIGHTS / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class FunctionalSpec:
    """Description of a bounded functional of the outcome."""

    kind: str  # "identity" | "square" | "indicator_leq" | "custom"
    c: float | None = None
    fn: Callable | None = None
    description: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "square", "indicator_leq", "custom"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == "indicator_leq" and self.c is None:
            raise ValueError("indicator_leq requires a cutoff c")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom functional requires a callable")

    @classmethod
    def identity(cls) -> "FunctionalSpec":
        return cls("identity", description="y")

    @classmethod
    def square(cls) -> "FunctionalSpec":
        return cls("square", description="y^2")

    @classmethod
    def indicator_leq(cls, c: float) -> "FunctionalSpec":
        return cls("indicator_leq", c=float(c), description=f"1(y<={c!r})")

    @classmethod
    def custom(cls, fn: Callable, description: str = "custom") -> "FunctionalSpec":
        return cls("custom", fn=fn, description=description)

    @property
    def label(self) -> str:
        return self.description or self.kind

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            return y
        if self.kind == "square":
            return y * y
        if self.kind == "indicator_leq":
            return (y <= self.c).astype(float)
        return np.asarray(self.fn(y), dtype=float)


def gaussian_expectation(h: FunctionalSpec, mean, sd: float):
    """E[h(Y)] for Y ~ Normal(mean, sd^2), vectorised over mean.

    Identity, square and threshold indicators have closed forms; custom
    callables fall back to Gauss-Hermite quadrature.
    """
    mean = np.asarray(mean, dtype=float)
    if sd == 0.0:
        return h(mean)
    if h.kind == "identity":
        return mean
    if h.kind == "square":
        return mean * mean + sd * sd
    if h.kind == "indicator_leq":
        return ndtr((h.c - mean) / sd)
    nodes = mean[..., None] + sd * _HERMITE_NODES
    return np.sum(h(nodes) * _HERMITE_WEIGHTS, axis=-1)


def bernoulli_expectation(h: FunctionalSpec, p):
    """E[h(Y)] for Y ~ Bernoulli(p), vectorised over p."""
    p = np.asarray(p, dtype=float)
    h0 = float(h(np.array(0.0)))
    h1 = float(h(np.array(1.0)))
    return (1.0 - p) * h0 + p * h1
