"""Lukasiewicz t-norm primitives over soft truth values.

Soft truth values live in [0, 1]; conjunction, disjunction and negation are
the Lukasiewicz operators max(a+b-1, 0), min(a+b, 1) and 1-a. All operations
are pure and safe to call concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass

# Construction tolerates rounding noise this far outside [0, 1] (softmax
# outputs can stray by an epsilon) and rejects anything further out.
_EDGE_TOL = 1e-12


@dataclass(frozen=True, order=True)
class TruthValue:
    """A soft truth value, clamped to the unit interval on construction."""

    value: float

    def __post_init__(self) -> None:
        v = float(self.value)
        if not (-_EDGE_TOL <= v <= 1.0 + _EDGE_TOL):
            raise ValueError(f"truth value outside [0, 1]: {v!r}")
        object.__setattr__(self, "value", min(max(v, 0.0), 1.0))

    def __float__(self) -> float:
        return self.value


def _coerce(x: TruthValue | float) -> TruthValue:
    return x if isinstance(x, TruthValue) else TruthValue(float(x))


def t_and(a: TruthValue | float, b: TruthValue | float) -> TruthValue:
    """Lukasiewicz conjunction: max(a + b - 1, 0)."""
    a, b = _coerce(a), _coerce(b)
    return TruthValue(max(a.value + b.value - 1.0, 0.0))


def t_or(a: TruthValue | float, b: TruthValue | float) -> TruthValue:
    """Lukasiewicz disjunction: min(a + b, 1)."""
    a, b = _coerce(a), _coerce(b)
    return TruthValue(min(a.value + b.value, 1.0))


def t_not(a: TruthValue | float) -> TruthValue:
    """Lukasiewicz negation: 1 - a. Involutive."""
    return TruthValue(1.0 - _coerce(a).value)
