"""Monte Carlo paths with first-exit detection, prices and hedge ledgers.

Paths follow an Euler scheme on a time grid that contains every time at
which the caller needs the state.  Each path draws from its own Philox
stream (key = seed, counter offset = path index), so a path's increments
depend only on ``(seed, path, step, axis)`` and not on batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from ._validation import ContractError, as_vector, check_positive_int, check_time
from .diffusion_models import DiffusionModel
from .geometry import HalfSpaceDomain, PayoffFunction, project_pi, reflect
from .hedge_operators import KnockInOperator, ORDER_CAP
from .quadrature import QuadratureScheme, singular_time_rule

__all__ = [
    "PathConfig",
    "MCEstimate",
    "PathEnsemble",
    "HedgeReport",
    "simulate_paths",
    "price_knock_out",
    "price_knock_in",
    "price_plain",
    "error_lhs_mc",
    "error_rhs_quadmc",
    "hedge_ledger",
]

_BLOCK = 4096


@dataclass(frozen=True)
class PathConfig:
    """Simulation settings; ``n_steps`` counts Euler steps per unit time."""

    n_paths: int = 10_000
    n_steps: int = 256
    seed: int = 0
    bridge_correction: bool = True
    scheme: str = "euler"

    def __post_init__(self):
        check_positive_int(self.n_paths, "n_paths", 100)
        check_positive_int(self.n_steps, "n_steps", 16)
        if self.scheme != "euler":
            raise ContractError(f"unknown scheme {self.scheme!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ContractError("seed must fit in 64 bits")

    def to_dict(self):
        return asdict(self)


@dataclass
class MCEstimate:
    mean: float
    std_error: float
    n_effective: int

    @classmethod
    def from_samples(cls, values, scale: float = 1.0) -> "MCEstimate":
        v = np.asarray(values, dtype=float) * scale
        n = v.size
        # pairwise summation inside numpy keeps this schedule independent
        mean = float(np.sum(v) / n)
        sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
        return cls(mean, sd / math.sqrt(n), n)

    def record(self, seed: int, model_hash: str) -> dict:
        return {"estimate": self.mean, "std_error": self.std_error, "n_paths": self.n_effective,
                "seed": int(seed), "model_hash": model_hash}


@dataclass
class PathEnsemble:
    """Simulated paths.

    ``X_rec[:, j]`` is the state at ``record_times[j]``; ``exited_by[:, j]`` is
    ``1_{tau < record_times[j]}``.  ``exit_time`` holds ``tau ^ T`` and
    ``exit_state`` the crossing point projected onto the barrier (``X_T`` for
    surviving paths).
    """

    times: np.ndarray
    record_times: np.ndarray
    X_rec: np.ndarray
    exited_by: np.ndarray
    exited: np.ndarray
    exit_time: np.ndarray
    exit_state: np.ndarray
    X_T: np.ndarray


def _time_grid(T, n_steps, extra):
    n = max(1, int(math.ceil(n_steps * T - 1e-9)))
    grid = np.linspace(0.0, T, n + 1)
    if extra is not None and len(extra):
        grid = np.union1d(grid, np.asarray(extra, dtype=float))
        # drop near-duplicates that would create zero-length steps
        keep = np.concatenate([[True], np.diff(grid) > 1e-12 * max(T, 1.0)])
        grid = grid[keep]
    return grid


def _draws(seed, first, count, n_steps, d):
    Z = np.empty((count, n_steps, d))
    U = np.empty((count, n_steps))
    for i in range(count):
        g = np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, first + i]))
        Z[i] = g.standard_normal((n_steps, d))
        U[i] = g.random(n_steps)
    return Z, U


def simulate_paths(model: DiffusionModel, dom: Optional[HalfSpaceDomain], x0, T: float, cfg: PathConfig,
                   record_times=None) -> PathEnsemble:
    """Euler paths with exit detection against ``dom`` (no barrier if ``dom`` is None).

    With ``bridge_correction`` a crossing between grid points is sampled with
    probability ``exp(-2 d_i d_{i+1} / (<gamma, A gamma> dt))`` where ``d`` is the
    distance to the barrier.
    """
    T = check_time(T, "T")
    d = model.d
    x0 = as_vector(x0, d, "x0")
    if dom is not None and not dom.contains(x0):
        raise ContractError("x0 must lie inside the domain")
    rec = np.unique(np.asarray([] if record_times is None else record_times, dtype=float))
    if rec.size and (rec.min() < 0 or rec.max() > T):
        raise ContractError("record times must lie in [0, T]")
    grid = _time_grid(T, cfg.n_steps, np.append(rec, T))
    rec_idx = np.searchsorted(grid, rec - 1e-12 * max(T, 1.0))
    n_steps = grid.size - 1
    dt = np.diff(grid)
    sqdt = np.sqrt(dt)
    N = cfg.n_paths
    X_rec = np.empty((N, rec.size, d))
    exited_by = np.zeros((N, rec.size), dtype=bool)
    exit_step = np.full(N, n_steps + 1)
    exit_state = np.empty((N, d))
    X_T = np.empty((N, d))
    const_chol = np.linalg.cholesky(model.const_A) if model.is_constant else None
    for start in range(0, N, _BLOCK):
        cnt = min(_BLOCK, N - start)
        Z, U = _draws(cfg.seed, start, cnt, n_steps, d)
        X = np.broadcast_to(x0, (cnt, d)).copy()
        alive = np.ones(cnt, dtype=bool)
        first = np.full(cnt, n_steps + 1)
        xt = np.zeros((cnt, d))
        rec_ptr = 0
        while rec_ptr < rec.size and rec_idx[rec_ptr] == 0:
            X_rec[start:start + cnt, rec_ptr] = X
            rec_ptr += 1
        for i in range(n_steps):
            if const_chol is not None:
                L = const_chol
                drift = model.const_b
                Xn = X + drift * dt[i] + sqdt[i] * (Z[:, i] @ L.T)
            else:
                A = model.A_at(X)
                L = np.linalg.cholesky(A)
                Xn = X + model.b_at(X) * dt[i] + sqdt[i] * np.einsum("nij,nj->ni", L, Z[:, i])
            if dom is not None:
                dn = Xn @ dom.gamma - dom.k
                crossed = dn <= 0.0
                if cfg.bridge_correction:
                    dp = X @ dom.gamma - dom.k
                    if const_chol is not None:
                        var = float(dom.gamma @ model.const_A @ dom.gamma)
                    else:
                        var = np.einsum("i,nij,j->n", dom.gamma, A, dom.gamma)
                    with np.errstate(over="ignore"):
                        prob = np.exp(-2.0 * np.maximum(dp, 0.0) * np.maximum(dn, 0.0) / (var * dt[i]))
                    crossed |= U[:, i] < prob
                new = alive & crossed
                if np.any(new):
                    first[new] = i + 1
                    proj = Xn[new] - np.maximum(dn[new], 0.0)[:, None] * dom.gamma
                    proj = proj - (proj @ dom.gamma - dom.k)[:, None] * dom.gamma
                    xt[new] = proj
                    alive &= ~new
            X = Xn
            while rec_ptr < rec.size and rec_idx[rec_ptr] == i + 1:
                X_rec[start:start + cnt, rec_ptr] = X
                exited_by[start:start + cnt, rec_ptr] = first <= i + 1
                rec_ptr += 1
        xt[alive] = X[alive]
        exit_step[start:start + cnt] = first
        exit_state[start:start + cnt] = xt
        X_T[start:start + cnt] = X
    exited = exit_step <= n_steps
    exit_time = np.where(exited, grid[np.minimum(exit_step, n_steps)], T)
    return PathEnsemble(grid, rec, X_rec, exited_by, exited, exit_time, exit_state, X_T)


def _disc(r, T):
    return math.exp(-float(r) * T)


def price_knock_out(f: PayoffFunction, model, dom, x0, T, r, cfg, paths: Optional[PathEnsemble] = None) -> MCEstimate:
    """``e^{-rT} E[f(X_T) 1_{tau > T}]``."""
    paths = paths or simulate_paths(model, dom, x0, T, cfg)
    return MCEstimate.from_samples(np.where(paths.exited, 0.0, f(paths.X_T)), _disc(r, T))


def price_knock_in(f: PayoffFunction, model, dom, x0, T, r, cfg, paths: Optional[PathEnsemble] = None) -> MCEstimate:
    paths = paths or simulate_paths(model, dom, x0, T, cfg)
    return MCEstimate.from_samples(np.where(paths.exited, f(paths.X_T), 0.0), _disc(r, T))


def price_plain(g, model, x0, T, r, cfg, paths: Optional[PathEnsemble] = None) -> MCEstimate:
    """``e^{-rT} E[g(X_T)]`` without barrier logic; ``g`` is any vectorized callable."""
    paths = paths or simulate_paths(model, None, x0, T, cfg)
    return MCEstimate.from_samples(np.asarray(g(paths.X_T), dtype=float), _disc(r, T))


def error_lhs_mc(f: PayoffFunction, model, dom, x0, T, cfg, paths: Optional[PathEnsemble] = None) -> MCEstimate:
    """Knock-out hedging error ``E[1_{tau < T} pi(f)(X_T)]``."""
    paths = paths or simulate_paths(model, dom, x0, T, cfg)
    return MCEstimate.from_samples(np.where(paths.exited, project_pi(f, dom, paths.X_T), 0.0))


def _time_nodes(T, quad):
    return singular_time_rule(T, quad.time_order, quad.singularity_substitution)


def error_rhs_quadmc(f: PayoffFunction, model, dom, x0, T, cfg, quad: Optional[QuadratureScheme] = None,
                     op: Optional[KnockInOperator] = None) -> MCEstimate:
    """``int_0^T E[1_{tau < s} S_{T-s} f(X_s)] ds`` with per-path time integration."""
    quad = quad or QuadratureScheme()
    op = op or KnockInOperator(model, dom, quad)
    s_nodes, s_w = _time_nodes(T, quad)
    paths = simulate_paths(model, dom, x0, T, cfg, record_times=s_nodes)
    per_path = np.zeros(cfg.n_paths)
    for j, (s, w) in enumerate(zip(s_nodes, s_w)):
        hit = paths.exited_by[:, j]
        if np.any(hit):
            per_path[hit] += w * op.apply_S(T - s, f, paths.X_rec[hit, j])
    return MCEstimate.from_samples(per_path)


@dataclass
class HedgeReport:
    """Values of the semi-static portfolio and its error terms at time 0."""

    n_max: int
    knock_out: MCEstimate
    knock_in: MCEstimate
    plain: MCEstimate
    error_lhs: MCEstimate
    orders: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    defect: Optional[MCEstimate] = None
    combined_se: float = float("nan")
    defect_paired_se: float = float("nan")

    def defect_ok(self, k: float = 3.0) -> bool:
        return abs(self.defect.mean) <= k * self.combined_se

    def to_dict(self) -> dict:
        def e(m):
            return {"estimate": m.mean, "std_error": m.std_error, "n_paths": m.n_effective}

        return {
            "n_max": self.n_max,
            "knock_out": e(self.knock_out),
            "knock_in": e(self.knock_in),
            "plain": e(self.plain),
            "error_lhs": e(self.error_lhs),
            "orders": {str(k): e(v) for k, v in sorted(self.orders.items())},
            "residuals": {str(k): e(v) for k, v in sorted(self.residuals.items())},
            "defect": e(self.defect),
            "combined_se": self.combined_se,
            "defect_paired_se": self.defect_paired_se,
        }


def hedge_ledger(n_max: int, f: PayoffFunction, model: DiffusionModel, dom: HalfSpaceDomain, x0, T: float,
                 r: float, cfg: PathConfig, quad: Optional[QuadratureScheme] = None, n_cap: int = ORDER_CAP,
                 residual_orders=None) -> HedgeReport:
    """Assemble the order-``n_max`` hedge identity on one set of paths.

    The identity checked is
    ``plain - sum_{h=1}^{n} order_h - knock_out - residual(n) = 0`` with
    ``order_h = int_0^T E[pi_perp S*^h_{T-u} f(X_u)] du`` and
    ``residual(n) = int_0^T E[1_{tau <= u} S*^{n+1}_{T-u} f(X_u)] du``.
    All terms share the discount factor ``e^{-rT}``.
    """
    n_max = check_positive_int(n_max, "n_max")
    if n_max + 1 > n_cap or n_max + 1 > ORDER_CAP:
        raise ContractError(f"n_max={n_max} needs S*^{n_max + 1}, above the cap {min(n_cap, ORDER_CAP)}")
    T = check_time(T, "T")
    quad = quad or QuadratureScheme()
    op = KnockInOperator(model, dom, quad, n_cap=n_cap)
    u_nodes, u_w = _time_nodes(T, quad)
    paths = simulate_paths(model, dom, x0, T, cfg, record_times=u_nodes)
    disc = _disc(r, T)
    N = cfg.n_paths
    pts_all = paths.X_rec.reshape(-1, dom.d)
    radius = float(np.max(np.abs(pts_all @ dom.gamma - dom.k))) * 1.05 + 1e-9
    radius = max(radius, quad.truncation_sigmas * math.sqrt(2 * model.M * T))
    F = op.star_evaluator(f, radius)
    res_orders = sorted(set(residual_orders or range(1, n_max + 1)) | {n_max})

    ko_s = np.where(paths.exited, 0.0, f(paths.X_T))
    ki_s = np.where(paths.exited, f(paths.X_T), 0.0)
    plain_s = project_pi(f, dom, paths.X_T)
    lhs_s = np.where(paths.exited, plain_s, 0.0)
    order_s = {h: np.zeros(N) for h in range(1, n_max + 1)}
    res_s = {n: np.zeros(N) for n in res_orders}
    for j, (u, w) in enumerate(zip(u_nodes, u_w)):
        X = paths.X_rec[:, j]
        hit = paths.exited_by[:, j]
        if not np.any(hit):
            continue
        out = hit & ~dom.contains(X)
        xo = X[out]
        both = np.concatenate([xo, reflect(xo, dom)], axis=0) if xo.size else xo
        m = xo.shape[0]
        for h in range(1, n_max + 1):
            if m:
                if h == 1:
                    vals = op.apply_S(T - u, f, both)
                else:
                    vals = F(h, T - u, both)
                order_s[h][out] += w * (vals[:m] + vals[m:])
        for n in res_orders:
            res_s[n][hit] += w * F(n + 1, T - u, X[hit])
    ko = MCEstimate.from_samples(ko_s, disc)
    ki = MCEstimate.from_samples(ki_s, disc)
    plain = MCEstimate.from_samples(plain_s, disc)
    lhs = MCEstimate.from_samples(lhs_s, disc)
    orders = {h: MCEstimate.from_samples(v, disc) for h, v in order_s.items()}
    residuals = {n: MCEstimate.from_samples(v, disc) for n, v in res_s.items()}
    defect_s = plain_s - ko_s - sum(order_s.values()) - res_s[n_max]
    defect = MCEstimate.from_samples(defect_s, disc)
    comb = math.sqrt(plain.std_error ** 2 + ko.std_error ** 2
                     + sum(o.std_error ** 2 for o in orders.values())
                     + residuals[n_max].std_error ** 2)
    return HedgeReport(n_max, ko, ki, plain, lhs, orders, residuals, defect, comb, defect.std_error)
