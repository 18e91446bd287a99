"""Noise coefficients g(u): a closed family with analytic Lipschitz/growth bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Diffusion"]

_KINDS = ("zero", "linear", "smoothed_abs")


@dataclass(frozen=True)
class Diffusion:
    """g(u) from one of: 0, c*u, or sqrt(u^2 + epsilon)."""

    kind: str
    c: float = 1.0
    epsilon: float = 0.01

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown diffusion kind {self.kind!r}; expected {_KINDS}")
        if self.kind == "smoothed_abs" and self.epsilon <= 0:
            raise ValueError("smoothed_abs needs epsilon > 0")

    @classmethod
    def zero(cls) -> "Diffusion":
        return cls("zero")

    @classmethod
    def linear(cls, c: float = 1.0) -> "Diffusion":
        return cls("linear", c=float(c))

    @classmethod
    def smoothed_abs(cls, epsilon: float) -> "Diffusion":
        return cls("smoothed_abs", epsilon=float(epsilon))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def value(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return self.c * u
        return np.sqrt(u * u + self.epsilon)

    def lipschitz_bound(self) -> float:
        """Analytic bound on |g'|: |c| for the linear family, 1 otherwise."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "linear":
            return abs(self.c)
        return 1.0  # |u| / sqrt(u^2 + eps) < 1

    def growth_bound(self) -> float:
        """C with g(u)^2 <= C (1 + u^2)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "linear":
            return self.c * self.c
        return max(1.0, self.epsilon)
