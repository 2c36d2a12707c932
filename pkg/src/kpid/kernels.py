"""Scalar kernels, the diagonal vector-valued kernel and the three Gram-type
matrices used to build the finite-rank operator.

Two scalar kernels are available:

* ``gaussian``: ``k(x, y) = exp(-||x - y||^2 / width)``
* ``expdot``:   ``k(x, y) = exp(x.y / width)``

Note the Gaussian width divides the *squared* distance directly (no factor 2,
no square on the width).

The vector-valued kernel section attached to a state ``x_i`` and control
``u_i`` is ``K_{x_i, ubar_i}(y) = k(y, x_i) * ubar_i`` with
``ubar_i = (1, u_i)``, so that inner products factor as
``k(x_i, x_j) * ubar_i.ubar_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "KernelKind",
    "KernelSpec",
    "control_embedding",
    "eval_scalar",
    "eval_vv_inner",
    "cross_kernel",
    "gram_domain",
    "gram_range",
    "interaction",
]


class KernelKind(str, Enum):
    GAUSSIAN = "gaussian"
    EXPDOT = "expdot"


@dataclass(frozen=True)
class KernelSpec:
    """Which scalar kernel to use and its width.

    Parameters
    ----------
    kind : KernelKind or str
        ``"gaussian"`` or ``"expdot"``.
    width : float
        Gaussian width (divides the squared distance) or the exponential
        dot-product scale. Must be positive.
    """

    kind: KernelKind = KernelKind.GAUSSIAN
    width: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        width = float(self.width)
        if not np.isfinite(width) or width <= 0:
            raise ValueError(f"kernel width must be positive, got {self.width!r}")
        object.__setattr__(self, "width", width)

    @classmethod
    def gaussian(cls, width: float = 20.0) -> "KernelSpec":
        return cls(KernelKind.GAUSSIAN, width)

    @classmethod
    def expdot(cls, width: float) -> "KernelSpec":
        return cls(KernelKind.EXPDOT, width)


def control_embedding(u) -> np.ndarray:
    """Return ``ubar = (1, u_1, ..., u_m)``.

    Accepts a single control (scalar or 1-D) or a stack of controls with shape
    ``(M, m)``; in the stacked case the result has shape ``(M, m + 1)``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim <= 1:
        return np.concatenate(([1.0], np.atleast_1d(u)))
    return np.hstack((np.ones((u.shape[0], 1)), u))


def _as_vector(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {x.shape}")
    return x


def _as_points(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of points, got shape {X.shape}")
    return X


def eval_scalar(k: KernelSpec, x, y) -> float:
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if x.shape != y.shape:
        raise ValueError(
            f"dimension mismatch: x has length {x.size}, y has length {y.size}"
        )
    if k.kind is KernelKind.GAUSSIAN:
        diff = x - y
        return float(np.exp(-np.dot(diff, diff) / k.width))
    return float(np.exp(np.dot(x, y) / k.width))


def eval_vv_inner(k: KernelSpec, x_i, ubar_i, x_j, ubar_j) -> float:
    """Inner product of two vector-valued kernel sections.

    ``<K_{x_i,ubar_i}, K_{x_j,ubar_j}> = k(x_i, x_j) * (ubar_i . ubar_j)``.
    The embeddings must already carry the leading 1 (see
    :func:`control_embedding`).
    """
    ubar_i = _as_vector(ubar_i, "ubar_i")
    ubar_j = _as_vector(ubar_j, "ubar_j")
    if ubar_i.shape != ubar_j.shape:
        raise ValueError(
            f"dimension mismatch: control embeddings have lengths "
            f"{ubar_i.size} and {ubar_j.size}"
        )
    return eval_scalar(k, x_i, x_j) * float(np.dot(ubar_i, ubar_j))


def cross_kernel(k: KernelSpec, X, Y) -> np.ndarray:
    """Matrix ``(k(x_i, y_j))_{ij}`` for point sets of shape (M, d) and (N, d)."""
    X = _as_points(X, "X")
    Y = _as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(
            f"dimension mismatch: points of length {X.shape[1]} and {Y.shape[1]}"
        )
    if k.kind is KernelKind.GAUSSIAN:
        return np.exp(-cdist(X, Y, "sqeuclidean") / k.width)
    return np.exp((X @ Y.T) / k.width)


def _symmetrize(G):
    # cdist / matmul are not guaranteed to give bitwise-symmetric output
    upper = np.triu(G)
    return upper + np.triu(G, 1).T


def gram_domain(k: KernelSpec, X, eps: float = 0.0) -> np.ndarray:
    """Domain Gram matrix ``(k(x_i, x_j)) + eps * I``; exactly symmetric."""
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    X = _as_points(X, "X")
    G = _symmetrize(cross_kernel(k, X, X))
    if k.kind is KernelKind.GAUSSIAN:
        np.fill_diagonal(G, 1.0)
    G[np.diag_indices_from(G)] += eps
    return G


def gram_range(k: KernelSpec, X, Ubar, eps: float = 0.0) -> np.ndarray:
    """Range Gram matrix ``(k(x_i, x_j) * ubar_i.ubar_j) + eps * I``."""
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    X = _as_points(X, "X")
    Ubar = _as_points(Ubar, "Ubar")
    if Ubar.shape[0] != X.shape[0]:
        raise ValueError(
            f"dimension mismatch: {X.shape[0]} states but {Ubar.shape[0]} controls"
        )
    K = _symmetrize(cross_kernel(k, X, X))
    if k.kind is KernelKind.GAUSSIAN:
        np.fill_diagonal(K, 1.0)
    G = _symmetrize(K * (Ubar @ Ubar.T))
    G[np.diag_indices_from(G)] += eps
    return G


def interaction(k: KernelSpec, X, Y) -> np.ndarray:
    """Interaction matrix with ``I[i, j] = k(x_i, y_j)``. Never regularized."""
    X = _as_points(X, "X")
    Y = _as_points(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError(
            f"dimension mismatch: X has shape {X.shape}, Y has shape {Y.shape}"
        )
    return cross_kernel(k, X, Y)
