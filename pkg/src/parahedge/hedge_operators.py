"""Knock-in operator ``S_t``, its time iterates and the hedge-term catalogue.

``S_t f(x) = int_D h(t, x, y) f(y) dy`` and
``S*^n_t f(x) = int_0^t S_s S*^{n-1}_{t-s} f(x) ds`` with ``S*^1 = S``.

Two engines realize these integrals:

* a direct engine doing nested tensor quadrature in ``d`` dimensions, usable
  for any model but costly beyond ``n = 2``;
* a reduced engine for coefficients that vary only along the barrier normal
  and payoffs of the form ``g(<x,gamma> - k) cos(<omega,x> + phase)``.  The
  transverse integral is done in closed form, leaving one-dimensional
  quadrature in the normal coordinate, and iterates can be tabulated on a
  grid for bulk evaluation at simulated states.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from ._validation import ContractError, as_points, check_positive_int, check_time
from .diffusion_models import DiffusionModel, symmetrize_parts
from .geometry import HalfSpaceDomain, PayoffFunction, project_pi, reflect
from .kernels import KernelEval, transverse_h0
from .quadrature import QuadratureScheme, gauss_legendre, interval_rule, singular_time_rule

__all__ = [
    "QuadratureScheme",
    "HedgeTerm",
    "KnockInOperator",
    "apply_S",
    "apply_S_star",
    "build_hedge_terms",
    "residual_term",
    "write_hedge_terms_csv",
    "ORDER_CAP",
]

ORDER_CAP = 4
_CHUNK = 1_500_000


# --------------------------------------------------------------------------
# direct engine
# --------------------------------------------------------------------------
class _DirectEngine:
    def __init__(self, kern: KernelEval, quad: QuadratureScheme):
        self.k = kern
        self.dom = kern.dom
        self.d = kern.d
        self.quad = quad
        self.frame = self.dom.orthonormal_frame()

    def nodes(self, t, x):
        """Quadrature nodes in ``D`` around each row of ``x``: (n, q, d) and weights (n, q)."""
        q = self.quad
        L = q.truncation_sigmas * np.sqrt(2.0 * self.k.model.M * t)
        inside = self.dom.contains(x)
        c = np.where(inside[:, None], x, reflect(x, self.dom))
        dist = np.maximum(c @ self.dom.gamma - self.dom.k, 0.0)
        lo = np.maximum(-dist, -L)
        u1, w1 = interval_rule(lo, np.full_like(lo, L), q.space_order)  # (n, q1)
        n = x.shape[0]
        if self.d == 1:
            u = u1[..., None]
            w = w1
        else:
            gx, gw = gauss_legendre(q.space_order)
            perp = np.stack(np.meshgrid(*([gx * L] * (self.d - 1)), indexing="ij"), -1).reshape(-1, self.d - 1)
            pw = np.prod(np.stack(np.meshgrid(*([gw * L] * (self.d - 1)), indexing="ij"), -1)
                         .reshape(-1, self.d - 1), axis=-1)
            nq1, npp = u1.shape[1], perp.shape[0]
            u = np.empty((n, nq1 * npp, self.d))
            u[..., 0] = np.repeat(u1, npp, axis=1)
            u[..., 1:] = np.tile(perp, (nq1, 1))[None]
            w = (w1[:, :, None] * pw[None, None, :]).reshape(n, -1)
        y = c[:, None, :] + u @ self.frame.T
        return y, w

    def apply(self, t, func: Callable, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        out = np.empty(x.shape[0])
        per = max(1, self.quad.space_order ** self.d)
        step = max(1, _CHUNK // per)
        for i in range(0, x.shape[0], step):
            xs = x[i:i + step]
            y, w = self.nodes(t, xs)
            hv = self.k.h_sym(t, xs[:, None, :], y)
            fv = func(y.reshape(-1, self.d)).reshape(y.shape[:-1])
            out[i:i + step] = np.sum(w * hv * fv, axis=1)
        return out

    def star(self, n, t, func, x) -> np.ndarray:
        if n == 1:
            return self.apply(t, func, x)
        s_nodes, s_w = singular_time_rule(t, self.quad.time_order, self.quad.singularity_substitution)
        total = np.zeros(np.asarray(x).reshape(-1, self.d).shape[0])
        for s, ws in zip(s_nodes, s_w):
            inner = lambda pts, r=t - s: self.star(n - 1, r, func, pts)
            total += ws * self.apply(s, inner, x)
        return total


# --------------------------------------------------------------------------
# reduced engine
# --------------------------------------------------------------------------
class _BranchKernel:
    """``H(t, w)`` for one branch of a constant model, with ``w = xi - eta``."""

    def __init__(self, tilde, dA, b, omega):
        self.a11 = tilde[0, 0]
        op = omega[1:]
        if op.size:
            self.alpha = float(tilde[0, 1:] @ op) / self.a11
            cond = tilde[1:, 1:] - np.outer(tilde[1:, 0], tilde[0, 1:]) / self.a11
            self.beta0 = 0.5 * float(op @ cond @ op)
            self.c1 = b[0] + 1j * float(dA[0, 1:] @ op)
            self.c0 = -0.5 * float(op @ dA[1:, 1:] @ op) + 1j * float(b[1:] @ op)
        else:
            self.alpha = 0.0
            self.beta0 = 0.0
            self.c1 = b[0]
            self.c0 = 0.0
        self.c2 = 0.5 * dA[0, 0]
        self.complex = bool(op.size and np.any(op != 0))

    def __call__(self, t, w):
        sig2 = t * self.a11
        if self.complex:
            D1 = -w / sig2 - 1j * self.alpha
            F = np.exp(-w * w / (2 * sig2) - 1j * self.alpha * w - t * self.beta0) / np.sqrt(2 * np.pi * sig2)
        else:
            D1 = -w / sig2
            F = np.exp(-w * w / (2 * sig2)) / np.sqrt(2 * np.pi * sig2)
        poly = self.c1 * D1
        if self.c2 != 0.0:
            poly = poly + self.c2 * (D1 * D1 - 1.0 / sig2)
        if self.c0 != 0.0:
            poly = poly + self.c0
        return poly * F


class _ReducedEngine:
    def __init__(self, model: DiffusionModel, dom: HalfSpaceDomain, structure, quad: QuadratureScheme):
        self.model = model
        self.dom = dom
        self.quad = quad
        self.omega = np.asarray(structure.omega, dtype=float)
        self.phase = structure.phase
        self.profile = structure.profile
        self.M = model.M
        self.is_complex = bool(np.any(self.omega != 0))
        self._tables = {}
        self.grid = None
        self._branches = None
        if model.is_constant:
            Q = dom.orthonormal_frame()
            oq = Q.T @ self.omega
            out = []
            for sign in (1.0, -1.0):
                base, corr = symmetrize_parts(model, dom, dom.k * dom.gamma + sign * dom.gamma)
                tilde = Q.T @ (base - corr) @ Q
                dA = Q.T @ (model.const_A - base + corr) @ Q
                out.append(_BranchKernel(tilde, dA, Q.T @ model.const_b, oq))
            self._branches = tuple(out)

    # kernel ------------------------------------------------------------
    def H(self, t, xi, eta):
        if self._branches is not None:
            inner, outer = self._branches
            w = xi - eta
            res = np.where(eta > 1e-12, inner(t, w), outer(t, w))
            return res
        return transverse_h0(self.model, self.dom, t, xi, eta, self.omega)

    def h(self, t, xi, eta):
        """Reduced ``h`` for ``eta > 0``: direct minus mirrored branch."""
        if self._branches is not None:
            inner, outer = self._branches
            return inner(t, xi - eta) - outer(t, xi + eta)
        return self.H(t, xi, eta) - self.H(t, xi, -eta)

    def eta_rule(self, t, xi, inner_tau=None):
        """Two-panel rule in the normal coordinate; the first panel hugs the
        barrier when the integrand has a boundary layer of width ``sqrt(inner_tau)``."""
        q = self.quad
        L = q.truncation_sigmas * np.sqrt(2.0 * self.M * t)
        c = np.abs(xi)
        lo = np.maximum(c - L, 0.0)
        hi = c + L
        mid = 0.5 * (lo + hi)
        if inner_tau is not None:
            ell = q.truncation_sigmas * np.sqrt(2.0 * self.M * inner_tau)
            mid = np.where((lo == 0.0) & (ell < mid), ell, mid)
        n1, w1 = interval_rule(lo, mid, q.space_order)
        n2, w2 = interval_rule(mid, hi, q.space_order)
        return np.concatenate([n1, n2], axis=-1), np.concatenate([w1, w2], axis=-1)

    def apply(self, t, func, xi, inner_tau=None):
        xi = np.asarray(xi, dtype=float).ravel()
        eta, w = self.eta_rule(t, xi, inner_tau)
        vals = func(eta)
        return np.sum(w * self.h(t, xi[:, None], eta) * vals, axis=1)

    def base_func(self, eta):
        return np.asarray(self.profile(eta), dtype=float)

    def star(self, n, t, xi, func=None, inner_tau=None):
        """Nested direct evaluation of the reduced ``S*^n_t``."""
        func = self.base_func if func is None else func
        if n == 1:
            return self.apply(t, func, xi, inner_tau)
        s_nodes, s_w = singular_time_rule(t, self.quad.time_order, self.quad.singularity_substitution)
        xi = np.asarray(xi, dtype=float).ravel()
        total = np.zeros(xi.shape, dtype=complex if self.is_complex else float)
        for s, ws in zip(s_nodes, s_w):
            r = t - s
            inner = lambda eta, r=r: self.star(n - 1, r, eta.ravel(), func).reshape(eta.shape)
            total = total + ws * self.apply(s, inner, xi, inner_tau=r)
        return total

    # tables -------------------------------------------------------------
    def set_grid(self, radius: float):
        npts = self.quad.grid_points
        half = npts // 2 + 1
        a = 6.0
        u = np.linspace(0.0, 1.0, half)
        pos = radius * np.sinh(a * u) / np.sinh(a)
        grid = np.concatenate([-pos[:0:-1], pos])
        if self.grid is None or self.grid.size != grid.size or not np.allclose(self.grid, grid):
            self.grid = grid
            self._pos = pos
            self._tables = {}

    def _spline(self, values):
        half = self._pos.size
        pos_vals = values[-half:]
        sp = CubicSpline(self._pos, pos_vals, extrapolate=False)
        R = self._pos[-1]
        return lambda eta: sp(np.clip(np.asarray(eta, dtype=float), 0.0, R))

    def table(self, n, tau):
        """Values of the reduced ``S*^n_tau`` on the grid (memoized)."""
        if self.grid is None:
            raise ContractError("call set_grid before tabulating")
        key = (n, float(tau))
        hit = self._tables.get(key)
        if hit is not None:
            return hit
        if n == 1:
            vals = self.apply(tau, self.base_func, self.grid)
        else:
            s_nodes, s_w = singular_time_rule(tau, self.quad.time_order, self.quad.singularity_substitution)
            vals = 0.0
            for s, ws in zip(s_nodes, s_w):
                r = tau - s
                inner = self._spline(self.table(n - 1, r))
                vals = vals + ws * self.apply(s, inner, self.grid, inner_tau=r)
        self._tables[key] = vals
        return vals

    def drop_tables(self, keep_order: int = 99):
        self._tables = {k: v for k, v in self._tables.items() if k[0] <= keep_order}

    def evaluate_table(self, n, tau, xi):
        vals = self.table(n, tau)
        xi = np.asarray(xi, dtype=float)
        R = self._pos[-1]
        sp = CubicSpline(self.grid, vals, extrapolate=False)
        return sp(np.clip(xi, -R, R))

    def lift(self, x, phi):
        """Map reduced values back to ``Re(exp(i(<omega,x> + phase)) phi)``."""
        if not self.is_complex and self.phase == 0.0:
            return np.real(phi)
        return np.real(np.exp(1j * (x @ self.omega + self.phase)) * phi)


# --------------------------------------------------------------------------
# public operator object
# --------------------------------------------------------------------------
class KnockInOperator:
    """``S_t`` and ``S*^n_t`` for a fixed model, domain and quadrature.

    Parameters
    ----------
    model, dom : DiffusionModel, HalfSpaceDomain
    quad : QuadratureScheme, optional
    n_cap : int
        Largest iterate order accepted (hard ceiling ``ORDER_CAP``).
    """

    def __init__(self, model: DiffusionModel, dom: HalfSpaceDomain, quad: Optional[QuadratureScheme] = None,
                 n_cap: int = ORDER_CAP):
        self.model = model
        self.dom = dom
        self.d = dom.d
        self.quad = quad or QuadratureScheme()
        self.kernel = KernelEval(model, dom)
        self.direct = _DirectEngine(self.kernel, self.quad)
        self.n_cap = min(int(n_cap), ORDER_CAP)
        self._reduced = {}

    def reduced(self, f: PayoffFunction) -> Optional[_ReducedEngine]:
        """Reduced engine for ``f`` when the model and payoff allow it."""
        st = f.structure
        if st is None or not st.matches(self.dom) or not self.model.is_layered(self.dom):
            return None
        eng = self._reduced.get(id(f))
        if eng is None:
            eng = _ReducedEngine(self.model, self.dom, st, self.quad)
            self._reduced[id(f)] = eng
        return eng

    def _check_order(self, n):
        n = check_positive_int(n, "n")
        if n > self.n_cap:
            raise ContractError(f"order {n} exceeds the configured cap {self.n_cap}")
        return n

    def _method(self, f, method):
        if method not in ("auto", "direct", "reduced"):
            raise ContractError(f"unknown method {method!r}")
        eng = self.reduced(f) if method in ("auto", "reduced") else None
        if method == "reduced" and eng is None:
            raise ContractError("reduced engine unavailable for this model/payoff")
        return eng

    def apply_S(self, t, f: PayoffFunction, x, method: str = "auto") -> np.ndarray:
        t = check_time(t)
        x = as_points(x, self.d)
        shape = x.shape[:-1]
        pts = x.reshape(-1, self.d)
        eng = self._method(f, method)
        if eng is not None:
            xi = pts @ self.dom.gamma - self.dom.k
            out = eng.lift(pts, eng.apply(t, eng.base_func, xi))
        else:
            out = self.direct.apply(t, lambda y: f(y), pts)
        return out.reshape(shape)

    def apply_S_star(self, n, t, f: PayoffFunction, x, method: str = "auto") -> np.ndarray:
        n = self._check_order(n)
        t = check_time(t)
        x = as_points(x, self.d)
        shape = x.shape[:-1]
        pts = x.reshape(-1, self.d)
        eng = self._method(f, method)
        if eng is not None:
            xi = pts @ self.dom.gamma - self.dom.k
            out = eng.lift(pts, eng.star(n, t, xi))
        else:
            out = self.direct.star(n, t, lambda y: f(y), pts)
        return out.reshape(shape)

    def residual_term(self, n, T, f: PayoffFunction, u, x, method: str = "auto") -> np.ndarray:
        """``int_u^T S_{s-u} S*^n_{T-s} f(x) ds``, i.e. ``S*^{n+1}_{T-u} f(x)``."""
        T = check_time(T, "T")
        u = float(u)
        if not 0.0 <= u < T:
            raise ContractError("need 0 <= u < T")
        n = self._check_order(n)
        if n + 1 > self.n_cap:
            raise ContractError(f"residual of order {n} needs S*^{n + 1}, above the cap {self.n_cap}")
        return self.apply_S_star(n + 1, T - u, f, x, method)

    def refinement_check(self, t, f: PayoffFunction, x, tol: float = 1e-6) -> dict:
        """Compare ``S_t f(x)`` with a doubled-order evaluation."""
        base = self.apply_S(t, f, x)
        fine = KnockInOperator(self.model, self.dom, self.quad.refined(), self.n_cap).apply_S(t, f, x)
        delta = float(np.max(np.abs(fine - base)))
        return {"value": base, "refined": fine, "delta": delta, "accuracy_warning": bool(delta > 100 * tol)}

    # bulk evaluation for Monte Carlo -------------------------------------
    def star_evaluator(self, f: PayoffFunction, radius: float):
        """Return ``F(n, tau, x)`` giving ``S*^n_tau f`` at many points.

        Uses grid tables when the reduced engine applies, otherwise direct
        quadrature (slow beyond ``n = 1``).
        """
        eng = self.reduced(f)
        if eng is not None:
            eng.set_grid(radius)

            def F(n, tau, x):
                x = np.asarray(x, dtype=float).reshape(-1, self.d)
                if x.shape[0] == 0:
                    return np.zeros(0)
                xi = x @ self.dom.gamma - self.dom.k
                return eng.lift(x, eng.evaluate_table(n, tau, xi))

            F.engine = eng
            return F

        def G(n, tau, x):
            x = np.asarray(x, dtype=float).reshape(-1, self.d)
            if x.shape[0] == 0:
                return np.zeros(0)
            return self.direct.star(n, tau, lambda y: f(y), x)

        G.engine = None
        return G


def apply_S(model, dom, t, f, x, quad=None, method="auto"):
    """Functional form of :meth:`KnockInOperator.apply_S`."""
    return KnockInOperator(model, dom, quad).apply_S(t, f, x, method)


def apply_S_star(model, dom, n, t, f, x, quad=None, method="auto"):
    return KnockInOperator(model, dom, quad).apply_S_star(n, t, f, x, method)


def residual_term(model, dom, n, T, f, u, x, quad=None, method="auto"):
    return KnockInOperator(model, dom, quad).residual_term(n, T, f, u, x, method)


# --------------------------------------------------------------------------
# hedge-term catalogue
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class HedgeTerm:
    """One family of claims in the semi-static portfolio.

    ``order = 0`` is the static plain claim ``pi(f)`` paying at ``T``.
    ``order = 1`` is ``pi_perp S_{T-s} f`` liquidated at ``s``; ``order = h >= 2``
    is ``pi_perp S_{s-u} S*^{h-1}_{T-s} f`` indexed by ``0 <= u <= s <= T``.
    Liquidation payoffs (order >= 1) vanish on ``D``.
    """

    order: int
    maturity_outer: Optional[float] = None
    maturity_inner: Optional[float] = None
    T: float = 1.0

    @property
    def liquidation(self) -> bool:
        return self.order >= 1

    @property
    def description(self) -> str:
        if self.order == 0:
            return "pi(f) at T"
        if self.order == 1:
            return "pi_perp S_{T-s} f on 0<s<T"
        return f"pi_perp S_{{s-u}} S*^{self.order - 1}_{{T-s}} f on 0<u<s<T"

    def at(self, s: Optional[float] = None, u: Optional[float] = None) -> "HedgeTerm":
        return HedgeTerm(self.order, s, u, self.T)

    def payoff(self, op: KnockInOperator, f: PayoffFunction, x, method: str = "auto") -> np.ndarray:
        """Evaluate this claim's payoff at ``x`` for the fixed indices."""
        x = as_points(x, op.d)
        if self.order == 0:
            return project_pi(f, op.dom, x)
        s = self.maturity_outer
        if s is None or not 0 < s < self.T:
            raise ContractError("liquidation term needs 0 < s < T")
        inside = op.dom.contains(x)
        out = np.zeros(x.shape[:-1])
        if np.all(inside):
            return out
        xo = x[~inside]
        both = np.concatenate([xo, reflect(xo, op.dom)], axis=0)
        if self.order == 1:
            vals = op.apply_S(self.T - s, f, both, method)
        else:
            u = self.maturity_inner
            if u is None or not 0 <= u < s:
                raise ContractError("order >= 2 term needs 0 <= u < s")
            eng = op._method(f, method)
            tau_outer, tau_inner = s - u, self.T - s
            if eng is not None:
                inner = lambda eta: eng.star(self.order - 1, tau_inner, eta.ravel()).reshape(eta.shape)
                xi = both @ op.dom.gamma - op.dom.k
                vals = eng.lift(both, eng.apply(tau_outer, inner, xi, inner_tau=tau_inner))
            else:
                inner = lambda pts: op.direct.star(self.order - 1, tau_inner, lambda y: f(y), pts)
                vals = op.direct.apply(tau_outer, inner, both)
        m = xo.shape[0]
        out[~inside] = vals[:m] + vals[m:]
        return out


def build_hedge_terms(n_max: int, T: float, f: Optional[PayoffFunction] = None,
                      dom: Optional[HalfSpaceDomain] = None) -> list:
    """Families of claims up to ``n_max``: ``pi(f)``, the order-1 strip, then double strips."""
    n_max = check_positive_int(n_max, "n_max")
    T = check_time(T, "T")
    return [HedgeTerm(order, None, None, T) for order in range(0, n_max + 1)]


def write_hedge_terms_csv(path, op: KnockInOperator, f: PayoffFunction, terms, grid, s_values,
                          u_values=None, method: str = "auto"):
    """Tabulate liquidation payoffs on ``grid`` (points off ``D``) per (order, s, u)."""
    grid = as_points(grid, op.d)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["order", "s", "u"] + [f"g{i}" for i in range(grid.shape[0])])
        for term in terms:
            if not term.liquidation:
                continue
            for s in s_values:
                us = [None] if term.order == 1 else [u for u in (u_values or []) if u < s]
                for u in us:
                    vals = term.at(s, u).payoff(op, f, grid, method)
                    wr.writerow([term.order, repr(float(s)), "" if u is None else repr(float(u))]
                                + [repr(float(v)) for v in vals])
