"""Diffusion coefficient families, ellipticity checks and the boundary defect.

Every coefficient evaluator is vectorized: ``A(x)`` maps a (..., d) stack of
points to a (..., d, d) stack of symmetric matrices and ``b(x)`` to (..., d).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._validation import ContractError, as_points, check_positive_int, check_symmetric
from .geometry import HalfSpaceDomain, reflect

__all__ = [
    "DiffusionModel",
    "ModelReport",
    "constant_model",
    "diagonal_model",
    "rotated_constant_model",
    "grid_model",
    "model_from_config",
    "validate_ellipticity",
    "commutator_defect",
    "symmetrize_A",
    "symmetrize_parts",
    "lipschitz_estimate",
    "calibrate_cq",
    "build_model_report",
]


@dataclass(eq=False)
class DiffusionModel:
    """Coefficients ``A``, ``b`` of ``dX = b(X) dt + A(X)^{1/2} dW`` plus declared bounds.

    Parameters
    ----------
    A, b : callable
        Vectorized coefficient maps.
    m, M : float
        Ellipticity window for the eigenvalues of ``A``.
    a_inf : float
        Lipschitz constant of ``A`` in Frobenius norm.
    b_inf : float
        ``max_i sup |b_i|``.
    M0, Cq : float
        Constants of the Gaussian upper bound on the transition density.
        ``M0`` defaults to ``1.05 M``; ``Cq`` may be left ``None`` and
        calibrated with :func:`calibrate_cq`.
    layer_direction : array or None
        Unit vector ``v`` such that ``A`` and ``b`` depend on ``x`` only
        through ``<x, v>``.  Constant models are layered in every direction.
    """

    d: int
    A: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    m: float
    M: float
    a_inf: float
    b_inf: float
    M0: Optional[float] = None
    Cq: Optional[float] = None
    family: str = "custom"
    params: dict = field(default_factory=dict)
    is_constant: bool = False
    layer_direction: Optional[np.ndarray] = None
    div_bound: float = 0.0

    def __post_init__(self):
        if not (0 < self.m <= self.M):
            raise ContractError(f"need 0 < m <= M, got m={self.m}, M={self.M}")
        if self.M0 is None:
            self.M0 = 1.05 * self.M
        if not self.M0 > self.M:
            raise ContractError("M0 must exceed M strictly")
        if self.Cq is not None and not self.Cq > 0:
            raise ContractError("Cq must be positive")
        if self.a_inf < 0 or self.b_inf < 0:
            raise ContractError("a_inf and b_inf must be non-negative")

    def A_at(self, x) -> np.ndarray:
        x = as_points(x, self.d)
        return np.asarray(self.A(x), dtype=float)

    def b_at(self, x) -> np.ndarray:
        x = as_points(x, self.d)
        return np.asarray(self.b(x), dtype=float)

    def is_layered(self, dom: HalfSpaceDomain) -> bool:
        """True when the coefficients vary only along the barrier normal."""
        if self.is_constant or self.d == 1:
            return True
        if self.layer_direction is None:
            return False
        return abs(abs(float(np.dot(self.layer_direction, dom.gamma))) - 1.0) < 1e-14

    def describe(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "d": self.d,
            "m": self.m,
            "M": self.M,
            "a_inf": self.a_inf,
            "b_inf": self.b_inf,
            "M0": self.M0,
            "Cq": self.Cq,
        }

    def model_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def _finish(model_kwargs, declared):
    for key in ("m", "M", "a_inf", "b_inf", "M0", "Cq"):
        if declared.get(key) is not None:
            model_kwargs[key] = float(declared[key])
    return DiffusionModel(**model_kwargs)


def constant_model(A, b=None, **declared) -> DiffusionModel:
    """Constant coefficients; ``m``, ``M`` default to the exact eigenvalue range."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    if A.shape != (d, d):
        raise ContractError("A must be square")
    check_symmetric(A)
    A = 0.5 * (A + A.T)
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float).reshape(d)
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= 0:
        raise ContractError("constant A is not positive definite")
    A.setflags(write=False)
    b.setflags(write=False)
    kwargs = dict(
        d=d,
        A=lambda x: np.broadcast_to(A, x.shape[:-1] + (d, d)),
        b=lambda x: np.broadcast_to(b, x.shape[:-1] + (d,)),
        m=float(eig[0]),
        M=float(eig[-1]),
        a_inf=0.0,
        b_inf=float(np.max(np.abs(b))),
        family="constant",
        params={"A": A.tolist(), "b": b.tolist()},
        is_constant=True,
    )
    model = _finish(kwargs, declared)
    model.const_A = A
    model.const_b = b
    return model


_PROFILES = {
    # name: (function, derivative sup per unit frequency, range)
    "sin2": (lambda u: np.sin(u) ** 2, 1.0, (0.0, 1.0)),
    "tanh": (np.tanh, 1.0, (-1.0, 1.0)),
}


def diagonal_model(base, amplitude, axis: int = 0, profile: str = "sin2", frequency: float = 1.0,
                   b=None, **declared) -> DiffusionModel:
    """``A(x) = diag(base_i + amplitude_i * g(frequency * x[axis]))`` with constant drift.

    ``g`` is ``sin^2`` or ``tanh``.  Diagonal matrices commute with
    ``e_axis e_axis^T``, so the boundary defect vanishes for axis-aligned barriers.
    """
    base = np.atleast_1d(np.asarray(base, dtype=float))
    amp = np.atleast_1d(np.asarray(amplitude, dtype=float))
    d = base.size
    if amp.size != d:
        raise ContractError("base and amplitude must have the same length")
    if profile not in _PROFILES:
        raise ContractError(f"unknown profile {profile!r}")
    if not 0 <= axis < d:
        raise ContractError("axis out of range")
    g, dsup, (lo, hi) = _PROFILES[profile]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float).reshape(d)
    freq = float(frequency)
    lows = base + np.minimum(amp * lo, amp * hi)
    highs = base + np.maximum(amp * lo, amp * hi)
    if lows.min() <= 0:
        raise ContractError("diagonal model is not uniformly elliptic")

    def A(x):
        vals = base + amp * g(freq * x[..., axis])[..., None]
        out = np.zeros(x.shape[:-1] + (d, d))
        idx = np.arange(d)
        out[..., idx, idx] = vals
        return out

    direction = np.zeros(d)
    direction[axis] = 1.0
    kwargs = dict(
        d=d,
        A=A,
        b=lambda x: np.broadcast_to(b, x.shape[:-1] + (d,)),
        m=float(lows.min()),
        M=float(highs.max()),
        a_inf=float(abs(freq) * dsup * np.linalg.norm(amp)),
        b_inf=float(np.max(np.abs(b))),
        family="diagonal",
        params={"base": base.tolist(), "amplitude": amp.tolist(), "axis": axis,
                "profile": profile, "frequency": freq, "b": b.tolist()},
        layer_direction=direction,
        div_bound=float(abs(freq) * dsup * abs(amp[axis])),
    )
    return _finish(kwargs, declared)


def rotated_constant_model(commutator: float, base: float = 1.0, gamma=None, transverse=None,
                           b=None, d: int = 2, **declared) -> DiffusionModel:
    """Constant ``A = base*I + c*(gamma v^T + v gamma^T)`` with ``v`` orthogonal to ``gamma``.

    The commutator ``[A, gamma gamma^T]`` has Frobenius norm ``sqrt(2)*|c|``, so
    the boundary defect is ``2*sqrt(2)*|c|``.
    """
    if d < 2:
        raise ContractError("rotated_constant needs d >= 2")
    g = np.zeros(d) if gamma is None else np.asarray(gamma, dtype=float).reshape(d)
    if gamma is None:
        g[0] = 1.0
    g = g / np.linalg.norm(g)
    if transverse is None:
        v = np.zeros(d)
        v[1] = 1.0
    else:
        v = np.asarray(transverse, dtype=float).reshape(d)
    v = v - (v @ g) * g
    if np.linalg.norm(v) < 1e-12:
        raise ContractError("transverse direction is parallel to gamma")
    v = v / np.linalg.norm(v)
    c = float(commutator)
    A = float(base) * np.eye(d) + c * (np.outer(g, v) + np.outer(v, g))
    model = constant_model(A, b, **declared)
    model.family = "rotated_constant"
    model.params = {"commutator": c, "base": float(base), "gamma": g.tolist(),
                    "transverse": v.tolist(), "b": model.const_b.tolist()}
    return model


def grid_model(path: str, d: int, **declared) -> DiffusionModel:
    """Coefficients tabulated on a tensor grid and interpolated multilinearly.

    The CSV holds one row per grid node: ``x_1..x_d``, the ``d*d`` entries of
    ``A`` row-major, then the ``d`` entries of ``b``.  Outside the grid the
    coordinates are clamped to the nearest face.
    """
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                continue  # header line
    data = np.asarray(rows)
    width = d + d * d + d
    if data.ndim != 2 or data.shape[1] != width:
        raise ContractError(f"grid CSV must have {width} columns for d={d}")
    axes = [np.unique(data[:, i]) for i in range(d)]
    shape = tuple(a.size for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise ContractError("grid CSV is not a full tensor grid")
    order = np.lexsort(tuple(data[:, i] for i in reversed(range(d))))
    data = data[order]
    Avals = data[:, d:d + d * d].reshape(shape + (d, d))
    check_symmetric(Avals)
    bvals = data[:, d + d * d:].reshape(shape + (d,))
    interp_A = RegularGridInterpolator(axes, Avals, method="linear")
    interp_b = RegularGridInterpolator(axes, bvals, method="linear")
    lo = np.array([a[0] for a in axes])
    hi = np.array([a[-1] for a in axes])

    def clamp(x):
        return np.clip(x, lo, hi)

    def A(x):
        flat = clamp(x).reshape(-1, d)
        out = interp_A(flat).reshape(x.shape[:-1] + (d, d))
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def b(x):
        flat = clamp(x).reshape(-1, d)
        return interp_b(flat).reshape(x.shape[:-1] + (d,))

    eig = np.linalg.eigvalsh(Avals.reshape(-1, d, d))
    # multilinear interpolation of SPD matrices stays in the convex hull of node values
    slopes = []
    for i in range(d):
        if shape[i] > 1:
            diff = np.diff(Avals, axis=i)
            h = np.diff(axes[i]).reshape([-1 if j == i else 1 for j in range(d)] + [1, 1])
            slopes.append(np.linalg.norm(diff / h, axis=(-1, -2)).max())
    a_inf = float(np.sqrt(np.sum(np.square(slopes)))) if slopes else 0.0
    kwargs = dict(
        d=d, A=A, b=b,
        m=float(eig.min()), M=float(eig.max()),
        a_inf=a_inf,
        b_inf=float(np.abs(bvals).max()),
        family="grid",
        params={"csv": str(path)},
    )
    return _finish(kwargs, declared)


def model_from_config(block: dict, d: Optional[int] = None) -> DiffusionModel:
    """Build a model from a config block ``{"family", "params", "m", "M", ...}``."""
    family = block.get("family")
    params = dict(block.get("params", {}))
    declared = {k: block.get(k) for k in ("m", "M", "a_inf", "b_inf", "M0", "Cq")}
    try:
        if family == "constant":
            return constant_model(params["A"], params.get("b"), **declared)
        if family == "diagonal":
            return diagonal_model(params["base"], params["amplitude"], params.get("axis", 0),
                                  params.get("profile", "sin2"), params.get("frequency", 1.0),
                                  params.get("b"), **declared)
        if family == "rotated_constant":
            return rotated_constant_model(params.get("commutator", 0.0), params.get("base", 1.0),
                                          params.get("gamma"), params.get("transverse"),
                                          params.get("b"), params.get("d", d or 2), **declared)
        if family == "grid":
            return grid_model(params["csv"], params.get("d", d or 1), **declared)
    except KeyError as exc:
        raise ContractError(f"model.params: missing field {exc.args[0]!r}") from None
    raise ContractError(f"unknown family {family!r} for model")


@dataclass
class ModelReport:
    """Sampled diagnostics plus the declared constants that feed the bounds."""

    delta: float
    ellipticity_ok: bool
    sampled_min_eig: float
    sampled_max_eig: float
    sample_count: int
    d: int = 1
    m: float = 1.0
    M: float = 1.0
    a_inf: float = 0.0
    b_inf: float = 0.0
    M0: float = 1.05
    Cq: float = 1.0
    div_bound: float = 0.0
    lipschitz_estimate: float = float("nan")
    lipschitz_ok: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _box_samples(rng, n, d, center, halfwidth):
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    return center + halfwidth * rng.uniform(-1.0, 1.0, size=(n, d))


def _default_halfwidth(model, T=1.0):
    return 6.0 * np.sqrt(model.M * T)


def validate_ellipticity(model: DiffusionModel, n_samples: int, seed: int = 0, center=None,
                         halfwidth: Optional[float] = None, dom: Optional[HalfSpaceDomain] = None,
                         tol: float = 1e-12) -> ModelReport:
    """Sample ``A`` in a box and compare its eigenvalue range with ``[m, M]``.

    Raises ``ContractError`` when a sampled matrix is not symmetric.
    """
    n_samples = check_positive_int(n_samples, "n_samples")
    rng = np.random.default_rng(seed)
    hw = _default_halfwidth(model) if halfwidth is None else float(halfwidth)
    x = _box_samples(rng, n_samples, model.d, center, hw)
    mats = model.A_at(x)
    check_symmetric(mats)
    eig = np.linalg.eigvalsh(mats)
    lo, hi = float(eig.min()), float(eig.max())
    ok = lo >= model.m * (1 - tol) and hi <= model.M * (1 + tol)
    delta = commutator_defect(model, dom, n_samples, seed) if dom is not None else 0.0
    return ModelReport(delta=delta, ellipticity_ok=bool(ok), sampled_min_eig=lo, sampled_max_eig=hi,
                       sample_count=n_samples, d=model.d, m=model.m, M=model.M, a_inf=model.a_inf,
                       b_inf=model.b_inf, M0=float(model.M0),
                       Cq=float(model.Cq) if model.Cq is not None else float("nan"),
                       div_bound=model.div_bound)


def _commutator_norm(A, gamma):
    P = np.outer(gamma, gamma)
    C = A @ P - P @ A
    return np.linalg.norm(C, axis=(-1, -2))


def commutator_defect(model: DiffusionModel, dom: HalfSpaceDomain, n_boundary_samples: int = 1000,
                      seed: int = 0, halfwidth: Optional[float] = None) -> float:
    """``2 * max ||[A(x), gamma gamma^T]||_F`` over boundary points.

    Exact for constant models; a sampled lower estimate otherwise.
    """
    if dom.d != model.d:
        raise ContractError("model and domain dimensions differ")
    if model.is_constant:
        return float(2.0 * _commutator_norm(model.const_A, dom.gamma))
    n = check_positive_int(n_boundary_samples, "n_boundary_samples")
    rng = np.random.default_rng(seed)
    hw = _default_halfwidth(model) if halfwidth is None else float(halfwidth)
    Q = dom.orthonormal_frame()
    z = hw * rng.uniform(-1.0, 1.0, size=(n, model.d))
    z[:, 0] = 0.0
    x = dom.k * dom.gamma + z @ Q.T
    return float(2.0 * _commutator_norm(model.A_at(x), dom.gamma).max())


def symmetrize_parts(model: DiffusionModel, dom: HalfSpaceDomain, y):
    """Split the mirrored coefficient as ``A_tilde(y) = base - corr``.

    ``base`` is ``A(y)`` on ``D`` and ``A(theta y)`` off ``D``; ``corr`` is
    ``2 (gamma c^T + c gamma^T)`` with ``c`` the part of ``A(theta y) gamma``
    orthogonal to ``gamma`` (zero on ``D``).  Roundoff-sized ``c`` is flushed so
    that commuting coefficients give an exactly unchanged matrix.
    """
    y = as_points(y, model.d)
    inside = dom.contains(y)
    src = np.where(inside[..., None], y, reflect(y, dom))
    base = model.A_at(src)
    g = dom.gamma
    Ag = base @ g
    c = Ag - (Ag @ g)[..., None] * g
    scale = np.abs(base).max(axis=(-1, -2), keepdims=False)[..., None]
    c = np.where(np.abs(c) <= 8 * np.finfo(float).eps * scale, 0.0, c)
    c = np.where(inside[..., None], 0.0, c)
    corr = 2.0 * (g[..., :, None] * c[..., None, :] + c[..., :, None] * g[..., None, :])
    return base, corr


def symmetrize_A(model: DiffusionModel, dom: HalfSpaceDomain, y) -> np.ndarray:
    """``A(y)`` on ``D`` and ``Psi A(theta y) Psi`` off ``D``."""
    base, corr = symmetrize_parts(model, dom, y)
    return base - corr


def lipschitz_estimate(model: DiffusionModel, n_pairs: int, seed: int = 0, center=None,
                       halfwidth: Optional[float] = None):
    """Largest sampled ``||A(x) - A(y)||_F / |x - y|``.

    Half the pairs are spread over the box and half are close neighbours,
    which is where the slope of a smooth field is attained.

    Returns
    -------
    estimate : float
    ok : bool
        ``estimate <= a_inf * (1 + 1e-6)``.
    """
    n = check_positive_int(n_pairs, "n_pairs")
    rng = np.random.default_rng(seed)
    hw = _default_halfwidth(model) if halfwidth is None else float(halfwidth)
    x = _box_samples(rng, n, model.d, center, hw)
    far = _box_samples(rng, n, model.d, center, hw)
    near = x + 1e-4 * hw * rng.standard_normal((n, model.d))
    y = np.where((np.arange(n) % 2 == 0)[:, None], far, near)
    dist = np.linalg.norm(x - y, axis=-1)
    keep = dist > 0
    num = np.linalg.norm(model.A_at(x[keep]) - model.A_at(y[keep]), axis=(-1, -2))
    est = float((num / dist[keep]).max()) if np.any(keep) else 0.0
    return est, bool(est <= model.a_inf * (1 + 1e-6) + 1e-15)


def calibrate_cq(model: DiffusionModel, T: float = 1.0, n_samples: int = 20000, seed: int = 0,
                 center=None, safety: float = 1.05) -> float:
    """Sampled prefactor of the Gaussian bounds on ``q_t`` and ``grad q_t``.

    Uses the constant-coefficient reference frozen at ``center``; the result
    is ``safety`` times the largest sampled ratio.
    """
    d = model.d
    x0 = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    A0 = model.A_at(x0)
    b0 = model.b_at(x0)
    Ainv = np.linalg.inv(A0)
    det = np.linalg.det(A0)
    rng = np.random.default_rng(seed)
    t = np.exp(rng.uniform(np.log(1e-4 * T), np.log(T), n_samples))
    w = 4.0 * np.sqrt(model.M * t)[:, None] * rng.standard_normal((n_samples, d))
    r = w - t[:, None] * b0
    quad = np.einsum("ni,ij,nj->n", r, Ainv, r)
    q = (2 * np.pi * t) ** (-d / 2) * det ** -0.5 * np.exp(-quad / (2 * t))
    grad = np.linalg.norm(r @ Ainv, axis=-1) / t * q
    env = np.exp(-np.sum(w * w, axis=-1) / (4 * model.M0 * t))
    ratio = max(np.max(q * t ** (d / 2) / env), np.max(grad * t ** ((d + 1) / 2) / env))
    return float(safety * ratio)


def build_model_report(model: DiffusionModel, dom: HalfSpaceDomain, n_samples: int = 4000,
                       seed: int = 0, T: float = 1.0, center=None) -> ModelReport:
    """Ellipticity, defect, Lipschitz and ``Cq`` in one report."""
    hw = 6.0 * np.sqrt(model.M * T)
    rep = validate_ellipticity(model, n_samples, seed, center, hw, dom)
    est, ok = lipschitz_estimate(model, n_samples, seed + 1, center, hw)
    rep.lipschitz_estimate = est
    rep.lipschitz_ok = ok
    if model.Cq is None:
        model.Cq = calibrate_cq(model, T, seed=seed + 2, center=center)
    rep.Cq = float(model.Cq)
    return rep
