"""Gauss-Legendre rules on intervals, boxes and singular time segments."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np

from ._validation import ContractError, check_positive_int

__all__ = ["QuadratureScheme", "gauss_legendre", "interval_rule", "singular_time_rule", "tensor_rule"]

SUBSTITUTIONS = ("sin2", "none")


@dataclass(frozen=True)
class QuadratureScheme:
    """Orders and truncation used by every spatial and temporal integral.

    ``truncation_sigmas`` multiplies ``sqrt(2 M t)`` to give the half-width of
    the spatial box.  ``singularity_substitution`` is ``"sin2"`` for
    ``s = t sin^2(pi theta / 2)`` or ``"none"`` for plain Gauss-Legendre.
    """

    space_order: int = 48
    time_order: int = 32
    truncation_sigmas: float = 8.6
    singularity_substitution: str = "sin2"
    grid_points: int = 201

    def __post_init__(self):
        check_positive_int(self.space_order, "space_order", 2)
        check_positive_int(self.time_order, "time_order", 2)
        check_positive_int(self.grid_points, "grid_points", 17)
        if not self.truncation_sigmas > 0:
            raise ContractError("truncation_sigmas must be positive")
        if self.singularity_substitution not in SUBSTITUTIONS:
            raise ContractError(f"unknown substitution {self.singularity_substitution!r}")

    def refined(self, factor: int = 2) -> "QuadratureScheme":
        return QuadratureScheme(self.space_order * factor, self.time_order * factor,
                                self.truncation_sigmas, self.singularity_substitution,
                                (self.grid_points - 1) * factor + 1)

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=64)
def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int):
    """Nodes and weights on [-1, 1]."""
    return _gl(int(n))


def interval_rule(a, b, n: int):
    """Gauss-Legendre nodes/weights on [a, b]; ``a``, ``b`` may be arrays (broadcast on a new last axis)."""
    x, w = _gl(int(n))
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def singular_time_rule(t: float, n: int, substitution: str = "sin2"):
    """Nodes ``s`` in (0, t) and weights for integrands with ``s^{-1/2}``/``(t-s)^{-1/2}`` ends."""
    x, w = _gl(int(n))
    if substitution == "none":
        return 0.5 * t * (x + 1.0), 0.5 * t * w
    theta = 0.5 * (x + 1.0)
    s = t * np.sin(0.5 * np.pi * theta) ** 2
    jac = 0.5 * np.pi * t * np.sin(np.pi * theta) * 0.5
    return s, jac * w


def tensor_rule(lows, highs, n: int):
    """Tensor Gauss-Legendre rule on a box; returns nodes (N, d) and weights (N,)."""
    lows = np.asarray(lows, dtype=float)
    highs = np.asarray(highs, dtype=float)
    d = lows.size
    x, w = _gl(int(n))
    pts = [lo + 0.5 * (hi - lo) * (x + 1.0) for lo, hi in zip(lows, highs)]
    wts = [0.5 * (hi - lo) * w for lo, hi in zip(lows, highs)]
    mesh = np.meshgrid(*pts, indexing="ij")
    wmesh = np.meshgrid(*wts, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1).reshape(-1, d)
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    return nodes, weights
