"""Closed-form Gaussian kernels of the mirrored parametrix.

``p_t(x, y)`` is the Gaussian in ``x`` with mean ``y`` and covariance
``t * A_tilde(y)``; ``h0 = (L - L^y) p`` is written out explicitly and ``h`` is
its antisymmetrization under the mirror map.  All evaluators broadcast over
leading axes of ``x`` and ``y``.
"""

from __future__ import annotations

import threading
from typing import Optional

import numpy as np

from ._validation import ContractError, as_points, check_time
from .diffusion_models import DiffusionModel, symmetrize_parts
from .geometry import HalfSpaceDomain, reflect
from .quadrature import QuadratureScheme, singular_time_rule, gauss_legendre

__all__ = ["KernelEval", "p2M", "transverse_h0"]


def p2M(t, x, y, M: float) -> np.ndarray:
    """Isotropic dominating Gaussian ``(4 pi M t)^{-d/2} exp(-|x-y|^2 / 4Mt)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    t = np.asarray(t, dtype=float)
    r2 = np.sum((x - y) ** 2, axis=-1)
    return (4 * np.pi * M * t) ** (-d / 2) * np.exp(-r2 / (4 * M * t))


class _Factor:
    __slots__ = ("base", "corr", "inv", "det")

    def __init__(self, base, corr):
        self.base = base
        self.corr = corr
        tilde = base - corr
        self.inv = np.linalg.inv(tilde)
        self.inv = 0.5 * (self.inv + np.swapaxes(self.inv, -1, -2))
        self.det = np.linalg.det(tilde)


class KernelEval:
    """Evaluators for ``p_t``, ``q_t``, ``h0`` and ``h`` on a fixed model and domain.

    Factorizations of ``A_tilde(y)`` are memoized per batch of ``y`` nodes; for
    constant models only the two branch matrices are ever factored.
    """

    def __init__(self, model: DiffusionModel, dom: HalfSpaceDomain, cache_size: int = 256):
        if model.d != dom.d:
            raise ContractError("model and domain dimensions differ")
        self.model = model
        self.dom = dom
        self.d = model.d
        self._cache = {}
        self._cache_size = cache_size
        self._lock = threading.Lock()
        self._branch = None
        if model.is_constant:
            inner = _Factor(*symmetrize_parts(model, dom, dom.k * dom.gamma + dom.gamma))
            outer = _Factor(*symmetrize_parts(model, dom, dom.k * dom.gamma - dom.gamma))
            self._branch = (inner, outer)

    # factorization -------------------------------------------------------
    def factor(self, y: np.ndarray):
        """Return ``(base, corr, inv, det)`` arrays for ``A_tilde`` at ``y``."""
        if self._branch is not None:
            inside = self.dom.contains(y)
            inner, outer = self._branch
            sel = inside[..., None, None]
            base = np.where(sel, inner.base, outer.base)
            corr = np.where(sel, inner.corr, outer.corr)
            inv = np.where(sel, inner.inv, outer.inv)
            det = np.where(inside, inner.det, outer.det)
            return base, corr, inv, det
        if y.size > 4096:
            hit = _Factor(*symmetrize_parts(self.model, self.dom, y))
            return hit.base, hit.corr, hit.inv, hit.det
        key = (y.shape, y.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            hit = _Factor(*symmetrize_parts(self.model, self.dom, y))
            with self._lock:
                if len(self._cache) >= self._cache_size:
                    self._cache.pop(next(iter(self._cache)))
                self._cache[key] = hit
        return hit.base, hit.corr, hit.inv, hit.det

    # kernels -------------------------------------------------------------
    def _prep(self, t, x, y):
        t = np.asarray(t, dtype=float)
        if np.any(~(t > 0)):
            raise ContractError("t must be positive")
        x = as_points(x, self.d, "x")
        y = as_points(y, self.d, "y")
        x, y = np.broadcast_arrays(x, y)
        return t, x, y

    def _p_from(self, t, w, inv, det):
        v = np.einsum("...ij,...j->...i", inv, w)
        quad = np.einsum("...i,...i->...", w, v)
        p = (2 * np.pi * t) ** (-self.d / 2) * det ** -0.5 * np.exp(-quad / (2 * t))
        return p, v

    def p_kernel(self, t, x, y) -> np.ndarray:
        """Mirrored frozen-coefficient density ``p_t(x, y)``."""
        t, x, y = self._prep(t, x, y)
        _, _, inv, det = self.factor(y)
        p, _ = self._p_from(t, x - y, inv, det)
        return p

    def q_reference(self, t, x, y) -> np.ndarray:
        """Exact transition density; constant-coefficient models only."""
        if not self.model.is_constant:
            raise ContractError("q_reference is only available for constant-coefficient models")
        t, x, y = self._prep(t, x, y)
        A = self.model.const_A
        b = self.model.const_b
        r = y - x - t[..., None] * b
        inv = np.linalg.inv(A)
        quad = np.einsum("...i,ij,...j->...", r, inv, r)
        return (2 * np.pi * t) ** (-self.d / 2) * np.linalg.det(A) ** -0.5 * np.exp(-quad / (2 * t))

    def h0(self, t, z, y) -> np.ndarray:
        """Parametrix defect ``h0(t, z, y)`` in closed form."""
        t, z, y = self._prep(t, z, y)
        base, corr, inv, det = self.factor(y)
        w = z - y
        p, v = self._p_from(t, w, inv, det)
        dA = (self.model.A_at(z) - base) + corr
        bz = self.model.b_at(z)
        quad = np.einsum("...i,...ij,...j->...", v, dA, v)
        trace = np.einsum("...ij,...ji->...", inv, dA)
        drift = np.einsum("...i,...i->...", bz, v)
        return (quad / (2 * t * t) - (trace + 2.0 * drift) / (2 * t)) * p

    def h_sym(self, t, x, y) -> np.ndarray:
        """``h0(t, x, y) - h0(t, x, theta(y))``."""
        y = as_points(y, self.d, "y")
        return self.h0(t, x, y) - self.h0(t, x, reflect(y, self.dom))

    def p2M(self, t, x, y) -> np.ndarray:
        return p2M(t, x, y, self.model.M)

    # parametrix identity -------------------------------------------------
    def _gauss_mesh(self, n):
        gx, gw = gauss_legendre(n)
        d = self.d
        mesh = np.stack(np.meshgrid(*([gx] * d), indexing="ij"), axis=-1).reshape(-1, d)
        wmesh = np.prod(np.stack(np.meshgrid(*([gw] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=-1)
        return mesh, wmesh

    def qh0_integral(self, s: float, r: float, x, y, quad: Optional[QuadratureScheme] = None, _mesh=None) -> float:
        """``int q_s(x, z) h0(r, z, y) dz`` on a box following the product Gaussian."""
        if not self.model.is_constant:
            raise ContractError("q is only available in closed form for constant-coefficient models")
        quad = quad or QuadratureScheme()
        x = as_points(x, self.d, "x").reshape(self.d)
        y = as_points(y, self.d, "y").reshape(self.d)
        mesh, wmesh = _mesh if _mesh is not None else self._gauss_mesh(quad.space_order)
        Ainv = np.linalg.inv(self.model.const_A)
        _, _, tinv, _ = self.factor(y)
        prec = Ainv / s + tinv / r
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + cov.T)
        mean = cov @ (Ainv @ (x + s * self.model.const_b) / s + tinv @ y / r)
        lam, V = np.linalg.eigh(cov)
        half = quad.truncation_sigmas * np.sqrt(2.0 * lam)
        z = mean + (mesh * half) @ V.T
        wz = wmesh * np.prod(half)
        return float(np.dot(wz, self.q_reference(s, x, z) * self.h0(r, z, y)))

    def parametrix_integral(self, t: float, x, y, quad: Optional[QuadratureScheme] = None) -> float:
        """``int_0^t int q_s(x, z) h0(t - s, z, y) dz ds`` by tensor quadrature.

        For each time node the spatial box follows the product of the two
        Gaussians in ``z``, so both endpoint layers are resolved.
        """
        if not self.model.is_constant:
            raise ContractError("parametrix_residual needs a constant-coefficient model")
        quad = quad or QuadratureScheme()
        t = check_time(t)
        mesh = self._gauss_mesh(quad.space_order)
        s_nodes, s_wts = singular_time_rule(t, quad.time_order, quad.singularity_substitution)
        return float(sum(ws * self.qh0_integral(s, t - s, x, y, quad, mesh) for s, ws in zip(s_nodes, s_wts)))

    def parametrix_residual(self, t: float, x, y, quad: Optional[QuadratureScheme] = None) -> float:
        """``q_t - p_t - int int q_s h0``; zero up to quadrature error."""
        q = float(self.q_reference(t, x, y))
        p = float(self.p_kernel(t, x, y))
        return q - p - self.parametrix_integral(t, x, y, quad)


def transverse_h0(model: DiffusionModel, dom: HalfSpaceDomain, t, xi, eta, omega=None) -> np.ndarray:
    """Fourier transform of ``h0`` across the barrier for layered coefficients.

    Returns ``H(t, xi, eta) = int h0(t, z, y) exp(-i <omega, z - y>) dz_perp``
    where ``xi = <z,gamma> - k`` and ``eta = <y,gamma> - k`` (``eta`` may be
    negative, selecting the mirrored branch of ``A_tilde``).  ``omega`` must be
    orthogonal to ``gamma``.  In one dimension this is just ``h0``.
    """
    if not model.is_layered(dom):
        raise ContractError("transverse_h0 needs coefficients varying only along gamma")
    d = model.d
    om = np.zeros(d) if omega is None else np.asarray(omega, dtype=float).reshape(d)
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    t, xi, eta = np.broadcast_arrays(t, xi, eta)
    g = dom.gamma
    zpts = (dom.k + xi)[..., None] * g
    ypts = (dom.k + eta)[..., None] * g
    base, corr = symmetrize_parts(model, dom, ypts)
    tilde = base - corr
    dA = (model.A_at(zpts) - base) + corr
    bz = model.b_at(zpts)
    Q = dom.orthonormal_frame()
    tilde = Q.T @ tilde @ Q
    dA = Q.T @ dA @ Q
    bq = bz @ Q
    oq = Q.T @ om
    w = xi - eta
    sig2 = t * tilde[..., 0, 0]
    if d > 1:
        op = oq[1:]
        s1p = t[..., None] * tilde[..., 0, 1:]
        spp = t[..., None, None] * tilde[..., 1:, 1:]
        alpha = np.einsum("...j,j->...", s1p, op) / sig2
        cond = spp - s1p[..., :, None] * s1p[..., None, :] / sig2[..., None, None]
        beta = 0.5 * np.einsum("i,...ij,j->...", op, cond, op)
        cross = np.einsum("...j,j->...", dA[..., 0, 1:], op)
        perp = np.einsum("i,...ij,j->...", op, dA[..., 1:, 1:], op)
        bperp = np.einsum("...j,j->...", bq[..., 1:], op)
    else:
        alpha = beta = cross = perp = bperp = np.zeros_like(w)
    D1 = -w / sig2 - 1j * alpha
    F = np.exp(-w * w / (2 * sig2) - 1j * alpha * w - beta) / np.sqrt(2 * np.pi * sig2)
    F1 = D1 * F
    F2 = (D1 * D1 - 1.0 / sig2) * F
    return (0.5 * dA[..., 0, 0] * F2 + 1j * cross * F1 - 0.5 * perp * F
            + bq[..., 0] * F1 + 1j * bperp * F)
