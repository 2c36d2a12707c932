"""Reference systems and dataset generation.

The controlled Duffing oscillator

    x1' = x2
    x2' = -delta x2 - beta x1 - alpha x1^3 + (2 + sin x1) u

is the main test case. Its augmented form carries ``(alpha, beta, delta)`` as
three extra states with zero drift and zero input gain. Continuous systems are
discretized with classical RK4 under zero-order-hold control.

All right-hand sides and step maps are vectorized over leading axes: a state
array of shape ``(..., n)`` and controls of shape ``(..., m)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .operator import SnapshotDataset
from .paramid import QueryDataset

RNG_ALGORITHM = "philox"

__all__ = [
    "DuffingParams",
    "ContinuousSystem",
    "DiscreteSystem",
    "SamplingConfig",
    "IntegrationError",
    "duffing_rhs",
    "augmented_rhs",
    "duffing",
    "augmented_duffing",
    "rk4_step",
    "linear_oracle",
    "scalar_pole_system",
    "make_rng",
    "uniform_controls",
    "generate_training",
    "generate_query",
]


class IntegrationError(RuntimeError):
    """Integration or rollout produced a non-finite state."""

    def __init__(self, message, step=None, state=None):
        self.step = step
        self.state = state
        super().__init__(message)


@dataclass(frozen=True)
class DuffingParams:
    alpha: float = 1.0
    beta_c: float = -1.0
    delta_c: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.alpha, self.beta_c, self.delta_c])):
            raise ValueError("Duffing parameters must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta_c, self.delta_c])


@dataclass(frozen=True)
class ContinuousSystem:
    """``x' = rhs(x, u)``; the last ``p`` of the ``n + p`` states are parameters."""

    n: int
    m: int
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    p: int = 0
    name: str = ""

    @property
    def n_aug(self) -> int:
        return self.n + self.p

    def discretize(self, dt: float) -> "DiscreteSystem":
        return DiscreteSystem(
            self.n, self.m, lambda x, u: rk4_step(self, x, u, dt), self.p, self.name
        )


@dataclass(frozen=True)
class DiscreteSystem:
    """``x+ = step(x, u)``, same state layout as :class:`ContinuousSystem`."""

    n: int
    m: int
    step: Callable[[np.ndarray, np.ndarray], np.ndarray]
    p: int = 0
    name: str = ""

    @property
    def n_aug(self) -> int:
        return self.n + self.p


@dataclass(frozen=True)
class SamplingConfig:
    """Uniform sampling boxes for training snapshots.

    ``state_box`` has one ``(low, high)`` row per augmented state component
    and ``control_box`` one per control channel.
    """

    samples: int
    state_box: np.ndarray
    control_box: np.ndarray
    dt: float = 0.1
    seed: int = 0

    def __post_init__(self):
        sb = np.atleast_2d(np.asarray(self.state_box, dtype=float))
        cb = np.atleast_2d(np.asarray(self.control_box, dtype=float))
        for name, box in (("state_box", sb), ("control_box", cb)):
            if box.shape[1] != 2 or np.any(box[:, 1] < box[:, 0]):
                raise ValueError(f"{name} must be rows of (low, high) with low <= high")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "state_box", sb)
        object.__setattr__(self, "control_box", cb)


def duffing_rhs(x, u, params: DuffingParams = DuffingParams()):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == x.ndim:
        u = u[..., 0]
    x1, x2 = x[..., 0], x[..., 1]
    out = np.empty_like(x)
    out[..., 0] = x2
    out[..., 1] = (
        -params.delta_c * x2 - params.beta_c * x1 - params.alpha * x1**3
        + (2.0 + np.sin(x1)) * u
    )
    return out


def augmented_rhs(x, u):
    """Duffing with ``(alpha, beta, delta)`` read from components 3..5 of ``x``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == x.ndim:
        u = u[..., 0]
    x1, x2 = x[..., 0], x[..., 1]
    alpha, beta, delta = x[..., 2], x[..., 3], x[..., 4]
    out = np.zeros_like(x)
    out[..., 0] = x2
    out[..., 1] = -delta * x2 - beta * x1 - alpha * x1**3 + (2.0 + np.sin(x1)) * u
    return out


def duffing(params: DuffingParams = DuffingParams()) -> ContinuousSystem:
    return ContinuousSystem(2, 1, lambda x, u: duffing_rhs(x, u, params), name="duffing")


def augmented_duffing() -> ContinuousSystem:
    return ContinuousSystem(2, 1, augmented_rhs, p=3, name="duffing")


def rk4_step(sys: ContinuousSystem, x, u, dt: float):
    """One classical RK4 step with ``u`` held constant over the step."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    f = sys.rhs
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = f(x, u)
        k2 = f(x + 0.5 * dt * k1, u)
        k3 = f(x + 0.5 * dt * k2, u)
        k4 = f(x + dt * k3, u)
        out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite RK4 result from state {x!r}, control {u!r}",
                               state=x)
    return out


def linear_oracle(A, B) -> DiscreteSystem:
    """Exact discrete linear map ``x+ = A x + B u``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)

    def step(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float).reshape(*x.shape[:-1], B.shape[1])
        return x @ A.T + u @ B.T

    return DiscreteSystem(A.shape[0], B.shape[1], step, name="linear")


def scalar_pole_system(b: float = 0.1) -> DiscreteSystem:
    """``x+ = a x + b u`` with the pole ``a`` carried as a constant second state."""

    def step(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if u.ndim == x.ndim:
            u = u[..., 0]
        out = x.copy()
        out[..., 0] = x[..., 1] * x[..., 0] + b * u
        return out

    return DiscreteSystem(1, 1, step, p=1, name="pole")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def uniform_controls(N: int, low=-2.0, high=2.0, seed: int = 0, m: int = 1):
    """``N`` i.i.d. uniform controls, shape ``(N, m)``."""
    return make_rng(seed).uniform(low, high, size=(N, m))


def _as_discrete(sys, dt):
    if isinstance(sys, ContinuousSystem):
        return sys.discretize(dt)
    return sys


def generate_training(sys, cfg: SamplingConfig) -> SnapshotDataset:
    """One ``(x, u, step(x, u))`` snapshot per i.i.d. uniform initial condition."""
    disc = _as_discrete(sys, cfg.dt)
    if cfg.state_box.shape[0] != disc.n_aug:
        raise ValueError(
            f"state box has {cfg.state_box.shape[0]} axes, system has {disc.n_aug} states"
        )
    if cfg.control_box.shape[0] != disc.m:
        raise ValueError(
            f"control box has {cfg.control_box.shape[0]} axes, system has {disc.m} inputs"
        )
    rng = make_rng(cfg.seed)
    X = rng.uniform(cfg.state_box[:, 0], cfg.state_box[:, 1],
                    size=(cfg.samples, disc.n_aug))
    U = rng.uniform(cfg.control_box[:, 0], cfg.control_box[:, 1],
                    size=(cfg.samples, disc.m))
    Y = disc.step(X, U)
    return SnapshotDataset(X, U, Y, p=disc.p)


def generate_query(sys, x0, params, controls, dt: float = 0.1,
                   box: Sequence[Sequence[float]] = None) -> QueryDataset:
    """Roll the true system from ``x0`` with the parameters fixed at ``params``.

    ``sys`` is the augmented system; its parameter states are pinned to
    ``params`` and only the first ``n`` components are recorded. Controls are
    an ``(N, m)`` array (see :func:`uniform_controls`).
    """
    disc = _as_discrete(sys, dt)
    params = np.atleast_1d(np.asarray(params, dtype=float))
    z = np.atleast_1d(np.asarray(x0, dtype=float))
    if z.size != disc.n or params.size != disc.p:
        raise ValueError(
            f"expected x0 of length {disc.n} and params of length {disc.p}, "
            f"got {z.size} and {params.size}"
        )
    if box is not None:
        box = np.atleast_2d(np.asarray(box, dtype=float))
        if np.any(z < box[: disc.n, 0]) or np.any(z > box[: disc.n, 1]):
            warnings.warn(f"query initial state {z} lies outside the model box",
                          RuntimeWarning, stacklevel=2)
    controls = np.asarray(controls, dtype=float).reshape(-1, disc.m)
    N = controls.shape[0]
    Z = np.empty((N, disc.n))
    Wq = np.empty((N, disc.n))
    for i, u in enumerate(controls):
        Z[i] = z
        try:
            nxt = disc.step(np.concatenate((z, params)), u)
        except IntegrationError as exc:
            raise IntegrationError(f"query rollout diverged at step {i + 1}: {exc}",
                                   step=i + 1, state=z) from None
        if not np.all(np.isfinite(nxt)):
            raise IntegrationError(f"query rollout diverged at step {i + 1}",
                                   step=i + 1, state=z)
        z = nxt[: disc.n]
        Wq[i] = z
    return QueryDataset(Z, controls, Wq)
