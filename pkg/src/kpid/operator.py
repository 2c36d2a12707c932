"""Finite-rank kernel representation of a control-affine discrete-time system.

Given snapshots ``(x_i, u_i, y_i)`` with ``y_i = F(x_i, u_i)``, :func:`train`
assembles the domain Gram matrix ``Gd``, the range Gram matrix ``Gb`` and the
interaction matrix ``I``, forms the operator matrix

    A = Gb^+ I^T Gd^+

and factors it as ``A = W diag(Sigma) V^T``. The learned one-step map is

    F_hat(x, u) = D V diag(Sigma) W^T B(x) (1, u)
                = D A^T B(x) (1, u)

where ``D`` holds the training states as columns and row ``j`` of ``B(x)`` is
``k(x, x_j) * ubar_j``. This is a projection, not an interpolant: a single
fixed-point snapshot does not reproduce ``y_1`` but ``x_1 * k(x_1, y_1)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .kernels import (
    KernelKind,
    KernelSpec,
    control_embedding,
    cross_kernel,
    gram_domain,
    gram_range,
    interaction,
)

__all__ = [
    "Dims",
    "SnapshotDataset",
    "FiniteRankModel",
    "DivergenceError",
    "operator_matrix",
    "pseudo_svd",
    "train",
    "modes",
    "singular_functions",
    "basis_matrix",
    "predict_step",
    "predict_step_direct",
    "predict_trajectory",
    "drift_and_control",
    "save_model",
    "load_model",
]

logger = logging.getLogger(__name__)

RECONSTRUCTION_TOL = 1e-8
PINV_RTOL = 1e-12
MODEL_FORMAT_VERSION = 1


class DivergenceError(RuntimeError):
    """A rollout produced a non-finite state."""

    def __init__(self, step, state):
        self.step = step
        self.state = np.asarray(state)
        super().__init__(f"non-finite state at step {step}: {self.state}")


@dataclass(frozen=True)
class Dims:
    M: int
    n: int
    p: int
    m: int

    @property
    def n_aug(self) -> int:
        return self.n + self.p


@dataclass(frozen=True)
class SnapshotDataset:
    """Training triples stored row-wise: ``X`` (M, n+p), ``U`` (M, m), ``Y`` (M, n+p).

    ``p`` is the number of trailing state components that are constant
    parameters. It is bookkeeping only; training treats all ``n + p``
    components alike.
    """

    X: np.ndarray
    U: np.ndarray
    Y: np.ndarray
    p: int = 0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        U = np.asarray(self.U, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if X.ndim != 2 or Y.ndim != 2 or U.ndim != 2:
            raise ValueError("X, U and Y must be 2-D arrays (one row per snapshot)")
        if not (X.shape[0] == U.shape[0] == Y.shape[0]):
            raise ValueError(
                f"length mismatch: X has {X.shape[0]} rows, U has {U.shape[0]}, "
                f"Y has {Y.shape[0]}"
            )
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one snapshot")
        if X.shape[1] != Y.shape[1]:
            raise ValueError(
                f"state dimension mismatch: X rows have {X.shape[1]} entries, "
                f"Y rows have {Y.shape[1]}"
            )
        if not 0 <= self.p <= X.shape[1]:
            raise ValueError(f"p={self.p} out of range for state dimension {X.shape[1]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Y", Y)

    @property
    def dims(self) -> Dims:
        M, n_aug = self.X.shape
        return Dims(M=M, n=n_aug - self.p, p=self.p, m=self.U.shape[1])

    def __len__(self):
        return self.X.shape[0]

    def permuted(self, perm) -> "SnapshotDataset":
        perm = np.asarray(perm)
        return SnapshotDataset(self.X[perm], self.U[perm], self.Y[perm], self.p)


@dataclass(frozen=True, eq=False)
class FiniteRankModel:
    """Everything needed to evaluate the learned one-step map.

    ``X`` and ``U`` are the training centers and controls (row-wise), ``D`` is
    ``X.T``, and ``(W, Sigma, V)`` factor the operator matrix ``A``. ``A`` is
    kept for the direct evaluation path; a loaded model rebuilds it from the
    factors.
    """

    kernel: KernelSpec
    eps: float
    X: np.ndarray
    U: np.ndarray
    D: np.ndarray
    W: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray
    dims: Dims
    A: np.ndarray = field(default=None, repr=False)
    effective_rank: int = None
    reconstruction_residual: float = None

    def __post_init__(self):
        if self.A is None:
            object.__setattr__(self, "A", (self.W * self.Sigma) @ self.V.T)
        if self.effective_rank is None:
            object.__setattr__(self, "effective_rank", int(self.Sigma.size))
        # one memory layout everywhere: BLAS rounding depends on it and a
        # reloaded model must evaluate bit for bit like the original
        for name in ("X", "U", "D", "W", "Sigma", "V", "A"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr is getattr(self, name):
                arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def Ubar(self) -> np.ndarray:
        return control_embedding(self.U)

    @property
    def C(self) -> np.ndarray:
        """``D V diag(Sigma) W^T``: maps basis activations to states, shape (n_aug, M).

        Built from the stored factors so that a saved and reloaded model
        evaluates bit for bit like the original.
        """
        C = self.__dict__.get("_C")
        if C is None:
            C = ((self.D @ self.V) * self.Sigma) @ self.W.T
            C.setflags(write=False)
            object.__setattr__(self, "_C", C)
        return C


def _check_finite(A, name="matrix"):
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")


def pseudo_svd(A):
    """SVD ``A = W diag(Sigma) V^T`` with a reproducible sign convention.

    Singular values come back nonincreasing. Each pair ``(w_i, v_i)`` is
    flipped so that the largest-magnitude entry of ``w_i`` is positive (the
    first such entry on ties).
    """
    A = np.asarray(A, dtype=float)
    _check_finite(A, "operator matrix")
    W, Sigma, Vt = scipy.linalg.svd(A, lapack_driver="gesdd")
    V = Vt.T
    idx = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[idx, np.arange(W.shape[1])])
    signs[signs == 0] = 1.0
    return W * signs, Sigma, V * signs


def _inverse_apply(G, B, eps):
    """Return ``G^{-1} B`` (eps > 0) or ``G^+ B`` (eps == 0), plus the rank used."""
    if eps > 0:
        try:
            return scipy.linalg.solve(G, B, assume_a="pos"), G.shape[0]
        except np.linalg.LinAlgError:
            logger.warning("regularized Gram not numerically positive definite; using LU")
            return scipy.linalg.solve(G, B), G.shape[0]
    P, rank = scipy.linalg.pinvh(G, rtol=PINV_RTOL, return_rank=True)
    if rank < G.shape[0]:
        warnings.warn(
            f"Gram matrix is singular (rank {rank} of {G.shape[0]}); "
            f"using pseudoinverse with relative cutoff {PINV_RTOL}",
            RuntimeWarning,
            stacklevel=3,
        )
    return P @ B, rank


def operator_matrix(kernel: KernelSpec, data: SnapshotDataset, eps: float = 0.0):
    """Return ``(A, rank)`` with ``A = Gb^+ I^T Gd^+`` and the smaller Gram rank."""
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    Ubar = control_embedding(data.U)
    Gd = gram_domain(kernel, data.X, eps)
    Gb = gram_range(kernel, data.X, Ubar, eps)
    I = interaction(kernel, data.X, data.Y)
    # Gb^{-1} I^T Gd^{-1} = Gb^{-1} (Gd^{-1} I)^T since Gd is symmetric
    left, rank_d = _inverse_apply(Gd, I, eps)
    A, rank_b = _inverse_apply(Gb, left.T, eps)
    _check_finite(A, "operator matrix")
    return A, min(rank_d, rank_b)


def train(data: SnapshotDataset, kernel: KernelSpec = None, eps: float = 1e-6,
          truncate: float = None) -> FiniteRankModel:
    """Learn the finite-rank model from snapshots.

    With ``eps > 0`` the regularized Grams are inverted directly; with
    ``eps == 0`` SVD-based pseudoinverses are used. ``truncate``, if given,
    drops singular triplets with ``sigma_i < truncate * sigma_1``; the full
    rank-M model is the default.
    """
    kernel = kernel or KernelSpec.gaussian()
    A, rank = operator_matrix(kernel, data, eps)
    W, Sigma, V = pseudo_svd(A)

    norm = np.linalg.norm(A)
    resid = np.linalg.norm((W * Sigma) @ V.T - A) / max(1.0, norm)
    if resid > RECONSTRUCTION_TOL:
        raise np.linalg.LinAlgError(
            f"SVD reconstruction residual {resid:.3e} exceeds {RECONSTRUCTION_TOL}"
        )

    if truncate is not None and Sigma.size and Sigma[0] > 0:
        keep = Sigma >= truncate * Sigma[0]
        W, Sigma, V = W[:, keep], Sigma[keep], V[:, keep]
        A = (W * Sigma) @ V.T
        rank = min(rank, int(keep.sum()))

    return FiniteRankModel(
        kernel=kernel,
        eps=float(eps),
        X=data.X.copy(),
        U=data.U.copy(),
        D=data.X.T.copy(),
        W=W,
        Sigma=Sigma,
        V=V,
        dims=data.dims,
        A=A,
        effective_rank=int(rank),
        reconstruction_residual=float(resid),
    )


def modes(model: FiniteRankModel) -> np.ndarray:
    """Mode matrix ``xi = D V`` of shape (n_aug, rank)."""
    return model.D @ model.V


def singular_functions(model: FiniteRankModel, i: int, x):
    """Evaluate the ``i``-th (1-based) left and right pseudo-singular functions.

    Returns ``(phi_i(x), psi_i(x))`` with ``phi_i(x) = sum_j V[j, i] k(x, x_j)``
    and ``psi_i(x) = sum_j W[j, i] k(x, x_j) ubar_j`` (length m + 1).
    """
    r = model.Sigma.size
    if not 1 <= i <= r:
        raise IndexError(f"singular function index {i} out of range 1..{r}")
    kx = _kernel_row(model, x)
    phi = float(kx @ model.V[:, i - 1])
    psi = (model.W[:, i - 1] * kx) @ model.Ubar
    return phi, psi


def _check_state(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dims.n_aug,):
        raise ValueError(
            f"dimension mismatch: state has shape {x.shape}, model expects "
            f"({model.dims.n_aug},)"
        )
    return x


def _check_control(model, u):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (model.dims.m,):
        raise ValueError(
            f"dimension mismatch: control has shape {u.shape}, model expects "
            f"({model.dims.m},)"
        )
    return u


def _kernel_row(model, x):
    x = _check_state(model, x)
    return cross_kernel(model.kernel, x[None, :], model.X)[0]


def basis_matrix(model: FiniteRankModel, x) -> np.ndarray:
    """``B(x)`` of shape (M, m + 1) with row ``j`` equal to ``k(x, x_j) ubar_j``."""
    return _kernel_row(model, x)[:, None] * model.Ubar


def predict_step(model: FiniteRankModel, x, u) -> np.ndarray:
    """One step of the learned map along the mode path ``xi Sigma W^T B(x) (1, u)``."""
    u = _check_control(model, u)
    act = basis_matrix(model, x) @ control_embedding(u)
    return modes(model) @ (model.Sigma * (model.W.T @ act))


def predict_step_direct(model: FiniteRankModel, x, u) -> np.ndarray:
    """Same map evaluated as ``[D A^T B(x)] (1, u)``, i.e. drift plus input term."""
    u = _check_control(model, u)
    return _output_matrix(model, x) @ control_embedding(u)


def predict_batch(model: FiniteRankModel, X, U) -> np.ndarray:
    """Vectorized one-step predictions for states (N, n_aug) and controls (N, m)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.asarray(U, dtype=float).reshape(X.shape[0], -1)
    K = cross_kernel(model.kernel, X, model.X)
    act = K * (control_embedding(U) @ model.Ubar.T)
    return act @ model.C.T


def predict_trajectory(model: FiniteRankModel, x0, controls) -> np.ndarray:
    """Roll the learned map forward; row 0 is ``x0``, one row per control after.

    Raises :class:`DivergenceError` carrying the step index when a state
    becomes non-finite.
    """
    x = _check_state(model, x0)
    controls = np.asarray(controls, dtype=float).reshape(-1, model.dims.m)
    out = np.empty((controls.shape[0] + 1, x.size))
    out[0] = x
    for k, u in enumerate(controls, start=1):
        with np.errstate(over="ignore", invalid="ignore"):
            x = predict_step(model, x, u)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k, x)
        out[k] = x
    return out


def drift_and_control(model: FiniteRankModel, x):
    """Split ``D A^T B(x)`` into drift (first column) and input matrix (the rest)."""
    G = _output_matrix(model, x)
    return G[:, 0], G[:, 1:]


def _output_matrix(model, x):
    return model.D @ (model.A.T @ basis_matrix(model, x))


# -- persistence ------------------------------------------------------------

_MATRIX_FILES = ("X", "U", "D", "W", "V", "Sigma")


def _write_csv(path, arr):
    arr = np.atleast_2d(arr) if np.ndim(arr) != 1 else arr[None, :]
    with open(path, "w") as fh:
        for row in arr:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def _read_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def save_model(model: FiniteRankModel, path) -> Path:
    """Write ``meta`` plus one CSV per matrix into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    d = model.dims
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "kernel": model.kernel.kind.value,
        "width": f"{model.kernel.width:.17g}",
        "eps": f"{model.eps:.17g}",
        "M": d.M,
        "n": d.n,
        "p": d.p,
        "m": d.m,
        "rank": model.Sigma.size,
        "effective_rank": model.effective_rank,
    }
    (path / "meta").write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    for name in _MATRIX_FILES:
        _write_csv(path / name, getattr(model, name))
    return path


def read_meta(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    return meta


def load_model(path) -> FiniteRankModel:
    path = Path(path)
    meta = read_meta(path / "meta")
    version = int(meta.get("format_version", -1))
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    dims = Dims(M=int(meta["M"]), n=int(meta["n"]), p=int(meta["p"]), m=int(meta["m"]))
    arrays = {name: _read_csv(path / name) for name in _MATRIX_FILES}
    return FiniteRankModel(
        kernel=KernelSpec(KernelKind(meta["kernel"]), float(meta["width"])),
        eps=float(meta["eps"]),
        X=arrays["X"],
        U=arrays["U"],
        D=arrays["D"],
        W=arrays["W"],
        Sigma=arrays["Sigma"].ravel(),
        V=arrays["V"],
        dims=dims,
        effective_rank=int(meta.get("effective_rank", arrays["Sigma"].size)),
    )


def with_rows_zeroed(model: FiniteRankModel, rows) -> FiniteRankModel:
    """Copy of ``model`` whose outputs in ``rows`` are identically zero."""
    D = model.D.copy()
    D[list(rows), :] = 0.0
    return replace(model, D=D)
