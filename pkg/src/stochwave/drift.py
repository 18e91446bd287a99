"""Odd-degree polynomial drift nonlinearities and their admissibility checks.

A drift is f(u) = sum_{j=1}^{q} a_j u^j with q odd.  Its potential is
V(u) = -integral of f from 0 to u, which must dominate
(alpha/2 + (lambda/2) u^{q-1}) u^2 for the supplied structure constants.
The two-point quotient -(V(a)-V(b))/(a-b) is evaluated through a
division-free polynomial recurrence, so the diagonal a == b needs no
special casing and returns f(a) exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["PolynomialDrift", "FULLY_IMPLICIT", "MODIFIED_CN", "SCHEMES"]

FULLY_IMPLICIT = "implicit"
MODIFIED_CN = "mcn"
SCHEMES = (FULLY_IMPLICIT, MODIFIED_CN)

_GRID_RADIUS = 1.0e3
_GRID_POINTS = 100_000


@dataclass(frozen=True)
class PolynomialDrift:
    """Coefficients a_1..a_q (constant in space) plus structure constants."""

    coeffs: tuple[float, ...]
    alpha: float = 0.0
    lam: float = 0.0

    def __init__(self, coeffs, alpha: float = 0.0, lam: float = 0.0):
        object.__setattr__(self, "coeffs", tuple(float(a) for a in coeffs))
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "lam", float(lam))
        if not self.coeffs:
            raise ValueError("drift needs at least one coefficient")

    @property
    def q(self) -> int:
        return len(self.coeffs)

    @property
    def is_zero(self) -> bool:
        return all(a == 0.0 for a in self.coeffs)

    @property
    def is_linear(self) -> bool:
        return all(a == 0.0 for a in self.coeffs[1:])

    def value(self, u):
        """f(u) = sum a_j u^j, by Horner evaluation."""
        u = np.asarray(u, dtype=float)
        acc = np.zeros_like(u)
        for a in reversed(self.coeffs):
            acc = (acc + a) * u
        return acc

    def derivative(self, u):
        """f'(u) = sum j a_j u^{j-1}."""
        u = np.asarray(u, dtype=float)
        acc = np.zeros_like(u)
        for j in range(self.q, 0, -1):
            acc = acc * u + j * self.coeffs[j - 1]
        return acc

    def potential(self, u):
        """V(u) = -sum a_j/(j+1) u^{j+1}."""
        u = np.asarray(u, dtype=float)
        acc = np.zeros_like(u)
        for j in range(self.q, 0, -1):
            acc = (acc - self.coeffs[j - 1] / (j + 1)) * u
        return acc * u

    def potential_quotient(self, a, b):
        """The two-point slope -(V(a)-V(b))/(a-b), division-free.

        Equals sum_j a_j/(j+1) sum_{k=0..j} a^k b^{j-k}; the inner sum s_j
        follows the recurrence s_j = b^j + a s_{j-1}.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        s = np.ones(np.broadcast(a, b).shape)
        bpow = np.ones_like(s)
        total = np.zeros_like(s)
        for j in range(1, self.q + 1):
            bpow = bpow * b
            s = bpow + a * s
            aj = self.coeffs[j - 1]
            if aj != 0.0:
                total = total + (aj / (j + 1)) * s
        return total

    def potential_quotient_da(self, a, b):
        """Partial derivative of potential_quotient with respect to ``a``."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        s = np.ones(np.broadcast(a, b).shape)
        ds = np.zeros_like(s)
        bpow = np.ones_like(s)
        total = np.zeros_like(s)
        for j in range(1, self.q + 1):
            bpow = bpow * b
            ds = s + a * ds
            s = bpow + a * s
            aj = self.coeffs[j - 1]
            if aj != 0.0:
                total = total + (aj / (j + 1)) * ds
        return total

    # -- admissibility --------------------------------------------------------

    def _coercivity_gap_coeffs(self) -> np.ndarray:
        """Coefficients (by power of u) of V(u) - (alpha/2 + lam/2 u^{q-1}) u^2.

        Building the gap polynomial coefficient-wise keeps exact cancellation
        when the bound is attained with equality.
        """
        gap = np.zeros(self.q + 2)
        for j in range(1, self.q + 1):
            gap[j + 1] = -self.coeffs[j - 1] / (j + 1)
        gap[2] -= 0.5 * self.alpha
        gap[self.q + 1] -= 0.5 * self.lam
        return gap

    def validate(self, dimension: int, scheme: str) -> list[str]:
        """Run the admissibility checks; return a list of violations (empty = ok)."""
        violations: list[str] = []
        if self.q % 2 == 0:
            violations.append(
                f"drift polynomial degree must be odd, got q={self.q}"
            )
            return violations
        if dimension == 3 and self.q > 3:
            violations.append(
                f"in three dimensions the drift degree is limited to 3, got q={self.q}"
            )
        if scheme not in SCHEMES:
            violations.append(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
            return violations

        u = np.linspace(-_GRID_RADIUS, _GRID_RADIUS, _GRID_POINTS)
        gap = np.polynomial.polynomial.polyval(u, self._coercivity_gap_coeffs())
        k = int(np.argmin(gap))
        if gap[k] < 0.0:
            violations.append(
                "potential fails the coercivity bound "
                f"(alpha={self.alpha}, lambda={self.lam}) at u={u[k]:g} "
                f"with gap {gap[k]:.3e}"
            )
        if scheme == FULLY_IMPLICIT:
            # convex potential: -f'(u) >= 0
            curv = -self.derivative(u)
            k = int(np.argmin(curv))
            if curv[k] < 0.0:
                violations.append(
                    "fully implicit drift discretization requires a convex "
                    f"potential; second derivative is {curv[k]:.3e} at u={u[k]:g}"
                )
        return violations
