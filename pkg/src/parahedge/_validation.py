"""Small input-checking helpers shared by the numerical modules."""

from __future__ import annotations

import numpy as np


class ContractError(ValueError):
    """Raised when an argument violates an operation's precondition."""


def as_points(x, d: int, name: str = "x") -> np.ndarray:
    """Return ``x`` as a float array of shape (..., d).

    A scalar is accepted when ``d == 1``.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if d != 1:
            raise ContractError(f"{name}: scalar given for dimension {d}")
        arr = arr.reshape(1)
    if arr.shape[-1] != d:
        raise ContractError(f"{name}: last axis has length {arr.shape[-1]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name}: non-finite entries")
    return arr


def as_vector(x, d: int, name: str = "x") -> np.ndarray:
    arr = as_points(x, d, name)
    if arr.ndim != 1:
        raise ContractError(f"{name}: expected a single {d}-vector, got shape {arr.shape}")
    return arr


def check_time(t, name: str = "t") -> float:
    t = float(t)
    if not np.isfinite(t) or t <= 0.0:
        raise ContractError(f"{name} must be a positive finite time, got {t}")
    return t


def check_positive_int(n, name: str, minimum: int = 1) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise ContractError(f"{name} must be an integer, got {n!r}")
    n = int(n)
    if n < minimum:
        raise ContractError(f"{name} must be >= {minimum}, got {n}")
    return n


def check_symmetric(mats: np.ndarray, rtol: float = 1e-10) -> None:
    """Raise if any matrix in a (..., d, d) stack is not symmetric."""
    asym = np.abs(mats - np.swapaxes(mats, -1, -2))
    scale = np.maximum(np.abs(mats).max(axis=(-1, -2), keepdims=True), 1e-300)
    if np.any(asym > rtol * scale):
        raise ContractError("diffusion matrix is not symmetric")
