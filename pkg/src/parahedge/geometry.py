"""Half-space barrier domain, its mirror map and the payoff projections.

The knock-out region is ``D = {x : <x, gamma> > k}``.  Points within
``BOUNDARY_TOL`` of the hyperplane count as outside ``D``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._validation import ContractError, as_points

__all__ = [
    "BOUNDARY_TOL",
    "HalfSpaceDomain",
    "PayoffFunction",
    "SeparableStructure",
    "reflect",
    "psi_matrix",
    "project_pi",
    "project_pi_perp",
    "constant_payoff",
    "call_payoff",
    "digital_payoff",
    "harmonic_payoff",
    "payoff_from_config",
]

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HalfSpaceDomain:
    """Open half-space ``{x : <x, gamma> > k}`` with unit normal ``gamma``."""

    gamma: np.ndarray
    k: float = 0.0

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float)).copy()
        if g.ndim != 1 or g.size < 1:
            raise ContractError("gamma must be a non-empty vector")
        if abs(np.linalg.norm(g) - 1.0) > 1e-14:
            raise ContractError("gamma must have unit length; use HalfSpaceDomain.normalized")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "k", float(self.k))

    @classmethod
    def normalized(cls, gamma, k: float = 0.0, warn_tol: float = 1e-6) -> "HalfSpaceDomain":
        """Build a domain from an arbitrary non-zero normal, rescaling ``gamma`` and ``k``."""
        g = np.atleast_1d(np.asarray(gamma, dtype=float))
        norm = np.linalg.norm(g)
        if not np.isfinite(norm) or norm == 0.0:
            raise ContractError("gamma must be a finite non-zero vector")
        if abs(norm - 1.0) > warn_tol:
            warnings.warn(f"gamma had norm {norm:.6g}; normalized on load", stacklevel=2)
        g = g / norm
        # exact unit length up to one rounding; a second pass tightens it
        g = g / np.linalg.norm(g)
        return cls(g, float(k) / norm)

    @property
    def d(self) -> int:
        return self.gamma.size

    def signed_distance(self, x) -> np.ndarray:
        """``<x, gamma> - k``; positive inside ``D``."""
        x = as_points(x, self.d)
        return x @ self.gamma - self.k

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) > BOUNDARY_TOL

    def on_boundary(self, x) -> np.ndarray:
        return np.abs(self.signed_distance(x)) <= BOUNDARY_TOL

    def orthonormal_frame(self) -> np.ndarray:
        """Orthogonal matrix whose first column is ``gamma``."""
        d = self.d
        if d == 1:
            return self.gamma.reshape(1, 1).copy()
        # Householder reflector mapping e1 to gamma keeps the frame exact for axis-aligned gamma
        e1 = np.zeros(d)
        e1[0] = 1.0
        v = e1 - self.gamma
        nv = np.linalg.norm(v)
        if nv < 1e-15:
            return np.eye(d)
        v = v / nv
        return np.eye(d) - 2.0 * np.outer(v, v)

    def to_config(self) -> dict:
        return {"gamma": [float(g) for g in self.gamma], "k": self.k}


def psi_matrix(dom: HalfSpaceDomain) -> np.ndarray:
    """Linear part ``I - 2 gamma gamma^T`` of the mirror map."""
    g = dom.gamma
    return np.eye(dom.d) - 2.0 * np.outer(g, g)


def reflect(x, dom: HalfSpaceDomain) -> np.ndarray:
    """Mirror ``x`` across the barrier hyperplane; works on (..., d) stacks."""
    x = as_points(x, dom.d)
    dist = x @ dom.gamma - dom.k
    return x - 2.0 * dist[..., None] * dom.gamma


@dataclass(frozen=True, eq=False)
class SeparableStructure:
    """Payoff of the form ``profile(<x,gamma> - k) * cos(<omega, x> + phase)``.

    ``omega`` is orthogonal to ``gamma``.  Operators exploit this form when the
    diffusion coefficients vary only along ``gamma``.
    """

    gamma: np.ndarray
    k: float
    profile: Callable[[np.ndarray], np.ndarray]
    omega: np.ndarray
    phase: float = 0.0

    def matches(self, dom: HalfSpaceDomain) -> bool:
        return (
            self.gamma.shape == dom.gamma.shape
            and np.allclose(self.gamma, dom.gamma, rtol=0, atol=1e-14)
            and abs(self.k - dom.k) <= 1e-14
        )


@dataclass(frozen=True, eq=False)
class PayoffFunction:
    """Bounded payoff ``f`` with a declared sup norm."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    d: int
    name: str = "custom"
    params: dict = field(default_factory=dict)
    structure: Optional[SeparableStructure] = None

    def __post_init__(self):
        if not np.isfinite(self.sup_bound) or self.sup_bound < 0:
            raise ContractError("payoff sup_bound must be finite and non-negative")

    def __call__(self, x) -> np.ndarray:
        x = as_points(x, self.d)
        return np.broadcast_to(np.asarray(self.evaluator(x), dtype=float), x.shape[:-1]).copy()


def project_pi(f: PayoffFunction, dom: HalfSpaceDomain, x) -> np.ndarray:
    """Knock-out hedge payoff: ``f(x)`` on ``D`` and ``-f(theta x)`` off ``D``."""
    x = as_points(x, dom.d)
    inside = dom.contains(x)
    return np.where(inside, f(x), -f(reflect(x, dom)))


def project_pi_perp(f: PayoffFunction, dom: HalfSpaceDomain, x) -> np.ndarray:
    """Liquidation payoff ``(f(x) + f(theta x)) 1_{x not in D}``."""
    x = as_points(x, dom.d)
    inside = dom.contains(x)
    return np.where(inside, 0.0, f(x) + f(reflect(x, dom)))


def _separable(dom, profile, omega=None, phase=0.0):
    om = np.zeros(dom.d) if omega is None else np.asarray(omega, dtype=float)
    return SeparableStructure(dom.gamma, dom.k, profile, om, float(phase))


def constant_payoff(dom: HalfSpaceDomain, value: float = 1.0) -> PayoffFunction:
    value = float(value)

    def profile(eta):
        return np.full(np.shape(eta), value)

    return PayoffFunction(
        lambda x: np.full(x.shape[:-1], value),
        abs(value),
        dom.d,
        "constant",
        {"value": value},
        _separable(dom, profile),
    )


def call_payoff(dom: HalfSpaceDomain, strike: float, cap: float) -> PayoffFunction:
    """Capped call on the projection ``<x, gamma>``: ``min((<x,gamma> - K)^+, cap)``."""
    strike, cap = float(strike), float(cap)
    if not np.isfinite(cap) or cap <= 0:
        raise ContractError("call payoff needs a finite positive cap")
    shift = dom.k - strike

    def profile(eta):
        return np.clip(np.asarray(eta) + shift, 0.0, cap)

    return PayoffFunction(
        lambda x: np.clip(x @ dom.gamma - strike, 0.0, cap),
        cap,
        dom.d,
        "call",
        {"strike": strike, "cap": cap},
        _separable(dom, profile),
    )


def digital_payoff(dom: HalfSpaceDomain, strike: float, amount: float = 1.0) -> PayoffFunction:
    """Pays ``amount`` when ``<x, gamma> > strike``."""
    strike, amount = float(strike), float(amount)
    shift = dom.k - strike

    def profile(eta):
        return np.where(np.asarray(eta) + shift > 0.0, amount, 0.0)

    return PayoffFunction(
        lambda x: np.where(x @ dom.gamma > strike, amount, 0.0),
        abs(amount),
        dom.d,
        "digital",
        {"strike": strike, "amount": amount},
        _separable(dom, profile),
    )


def harmonic_payoff(dom: HalfSpaceDomain, omega, amplitude: float = 1.0, phase: float = 0.0) -> PayoffFunction:
    """``amplitude * cos(<omega, x> + phase)`` with ``omega`` projected orthogonal to ``gamma``.

    Varies along the barrier, so it sees the off-diagonal coupling of ``A``.
    """
    om = np.asarray(omega, dtype=float).reshape(dom.d)
    om = om - (om @ dom.gamma) * dom.gamma
    amplitude, phase = float(amplitude), float(phase)

    def profile(eta):
        return np.full(np.shape(eta), amplitude)

    return PayoffFunction(
        lambda x: amplitude * np.cos(x @ om + phase),
        abs(amplitude),
        dom.d,
        "harmonic",
        {"omega": [float(v) for v in om], "amplitude": amplitude, "phase": phase},
        _separable(dom, profile, om, phase),
    )


PAYOFF_FAMILIES = {
    "constant": lambda dom, p: constant_payoff(dom, p.get("value", 1.0)),
    "call": lambda dom, p: call_payoff(dom, p["strike"], p["cap"]),
    "digital": lambda dom, p: digital_payoff(dom, p["strike"], p.get("amount", 1.0)),
    "harmonic": lambda dom, p: harmonic_payoff(dom, p["omega"], p.get("amplitude", 1.0), p.get("phase", 0.0)),
}


def payoff_from_config(block: dict, dom: HalfSpaceDomain) -> PayoffFunction:
    family = block.get("family")
    if family not in PAYOFF_FAMILIES:
        raise ContractError(f"unknown family {family!r} for payoff")
    try:
        return PAYOFF_FAMILIES[family](dom, dict(block.get("params", {})))
    except KeyError as exc:
        raise ContractError(f"payoff.params: missing field {exc.args[0]!r}") from None
