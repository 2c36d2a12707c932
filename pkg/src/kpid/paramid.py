"""Brute-force parameter identification over a mesh of candidate values.

Each candidate ``eta`` is appended to the measured query states, the learned
model predicts one step ahead from every measured state, and the candidate is
scored by the mean squared error of the first ``n`` output components against
the measured successors. The best-scoring mesh node is returned.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import control_embedding, cross_kernel
from .operator import FiniteRankModel, predict_batch

__all__ = [
    "QueryDataset",
    "ParameterMesh",
    "IdentificationResult",
    "augment",
    "query_mse",
    "identify",
    "mse_distance_table",
]

logger = logging.getLogger(__name__)

_NODE_CHUNK = 2048


@dataclass(frozen=True)
class QueryDataset:
    """Measured triples ``(z_i, u_i, w_i)`` from the system with unknown parameters."""

    Z: np.ndarray
    U: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        U = np.asarray(self.U, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if not (Z.shape[0] == U.shape[0] == W.shape[0]) or Z.shape[0] < 1:
            raise ValueError(
                f"query lengths must agree and be >= 1: Z {Z.shape[0]}, "
                f"U {U.shape[0]}, W {W.shape[0]}"
            )
        if Z.shape != W.shape:
            raise ValueError(f"Z has shape {Z.shape} but W has shape {W.shape}")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "W", W)

    @property
    def N(self) -> int:
        return self.Z.shape[0]

    @property
    def n(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class ParameterMesh:
    """Axis-aligned grid; ``axes`` holds one ``(lower, upper, spacing)`` per parameter.

    Nodes along an axis are ``lower + k * spacing`` for
    ``k = 0 .. floor((upper - lower) / spacing)``; the full node list is the
    Cartesian product in lexicographic order (first axis varies slowest).
    """

    axes: tuple

    def __post_init__(self):
        axes = tuple(tuple(float(v) for v in ax) for ax in self.axes)
        for lo, hi, h in axes:
            if not h > 0:
                raise ValueError(f"mesh spacing must be positive, got {h}")
            if hi < lo:
                raise ValueError(f"mesh axis upper {hi} below lower {lo}")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, lower: float, upper: float, spacing: float, p: int):
        return cls(((lower, upper, spacing),) * p)

    @property
    def p(self) -> int:
        return len(self.axes)

    def axis_nodes(self, i: int) -> np.ndarray:
        lo, hi, h = self.axes[i]
        # relative slack so e.g. 0.6 / 0.05 = 11.999... still counts 13 nodes
        count = int(np.floor((hi - lo) / h * (1 + 1e-12) + 1e-12)) + 1
        return lo + np.arange(count) * h

    @property
    def shape(self) -> tuple:
        return tuple(self.axis_nodes(i).size for i in range(self.p))

    def nodes(self) -> np.ndarray:
        """All nodes, shape ``(num_nodes, p)``, lexicographic order."""
        if self.p == 0:
            return np.zeros((1, 0))
        axes = [self.axis_nodes(i) for i in range(self.p)]
        return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, self.p)

    def __len__(self):
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class IdentificationResult:
    """Outcome of a mesh sweep.

    ``nodes`` (K, p) and ``mse`` (K,) are in mesh order; ``distance`` is only
    filled when a reference parameter was supplied. ``nonfinite`` flags nodes
    whose prediction blew up (scored +inf).
    """

    best_node: np.ndarray
    best_mse: float
    nodes: np.ndarray
    mse: np.ndarray
    nonfinite: np.ndarray
    distance: np.ndarray = None

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.mse))

    @property
    def table(self) -> list:
        dist = self.distance if self.distance is not None else [None] * len(self.mse)
        return [(tuple(node), float(e), d if d is None else float(d))
                for node, e, d in zip(self.nodes, self.mse, dist)]


def augment(z, eta) -> np.ndarray:
    """``[z; eta]``; works row-wise on stacked states too."""
    z = np.asarray(z, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if z.ndim == 1:
        return np.concatenate((z, eta.ravel()))
    return np.hstack((z, np.broadcast_to(eta, (z.shape[0], eta.size))))


def _check_dims(model, q, p):
    d = model.dims
    if q.n + p != d.n_aug:
        raise ValueError(
            f"query state dimension {q.n} plus {p} parameters does not match "
            f"model state dimension {d.n_aug}"
        )
    if q.U.shape[1] != d.m:
        raise ValueError(f"query has {q.U.shape[1]} inputs, model expects {d.m}")


def query_mse(model: FiniteRankModel, q: QueryDataset, eta) -> float:
    """Mean over the query of ``||w_i - F_hat([z_i; eta], u_i)[:n]||^2``.

    Returns ``inf`` when any prediction is non-finite.
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    _check_dims(model, q, eta.size)
    with np.errstate(over="ignore", invalid="ignore"):
        pred = predict_batch(model, augment(q.Z, eta), q.U)[:, : q.n]
        err = float(np.mean(np.sum((q.W - pred) ** 2, axis=1)))
    if not np.isfinite(err):
        logger.debug("non-finite score at eta=%s", eta)
        return np.inf
    return err


def _mesh_scores(model, q, nodes):
    """Scores for every node at once.

    Both supported kernels factor over coordinate blocks,
    ``k([z; eta], [xz; xe]) = k(z, xz) * k(eta, xe)``, so the state block is
    evaluated once and each node only needs its parameter block.
    """
    n = q.n
    X = model.X
    Kz = cross_kernel(model.kernel, q.Z, X[:, :n])                 # (N, M)
    act = Kz * (control_embedding(q.U) @ model.Ubar.T)             # (N, M)
    Cn = model.C[:n]                                               # (n, M)
    # T[j, i, l] = act[i, j] * C[l, j]
    T = (act.T[:, :, None] * Cn.T[:, None, :]).reshape(X.shape[0], -1)
    target = q.W.reshape(-1)
    scores = np.empty(nodes.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, nodes.shape[0], _NODE_CHUNK):
            chunk = nodes[start:start + _NODE_CHUNK]
            if chunk.shape[1]:
                Ke = cross_kernel(model.kernel, chunk, X[:, n:])   # (K, M)
            else:
                Ke = np.ones((chunk.shape[0], X.shape[0]))
            pred = Ke @ T                                          # (K, N*n)
            sq = (pred - target) ** 2
            scores[start:start + chunk.shape[0]] = sq.sum(axis=1) / q.N
    return scores


def identify(model: FiniteRankModel, q: QueryDataset, mesh: ParameterMesh,
             reference: Sequence[float] = None) -> IdentificationResult:
    """Score every mesh node and return the minimizer.

    Ties go to the lexicographically smallest node. ``reference`` is used
    only to tabulate distances for reporting.
    """
    _check_dims(model, q, mesh.p)
    nodes = mesh.nodes()
    scores = _mesh_scores(model, q, nodes)
    nonfinite = ~np.isfinite(scores)
    scores[nonfinite] = np.inf
    if nonfinite.all():
        raise FloatingPointError("model diverges on all candidates")
    if nonfinite.any():
        logger.warning("%d of %d candidates produced non-finite predictions",
                       int(nonfinite.sum()), nodes.shape[0])
    best = int(np.argmin(scores))
    distance = None
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        distance = np.linalg.norm(nodes - reference, axis=1)
    return IdentificationResult(
        best_node=nodes[best].copy(),
        best_mse=float(scores[best]),
        nodes=nodes,
        mse=scores,
        nonfinite=nonfinite,
        distance=distance,
    )


def mse_distance_table(result: IdentificationResult, truth) -> np.ndarray:
    """Rows of ``(distance to truth, mse)`` sorted by distance, then MSE."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (result.nodes.shape[1],):
        raise ValueError(
            f"truth has shape {truth.shape}, mesh nodes have {result.nodes.shape[1]} axes"
        )
    dist = np.linalg.norm(result.nodes - truth, axis=1)
    order = np.lexsort((result.mse, dist))
    return np.column_stack((dist[order], result.mse[order]))
