"""Command-line front end.

    kpid generate | train | identify | rollout | sweep  [--config FILE] [--key value ...]

Settings come from a plain ``key=value`` config file and are overridden by
command-line flags of the same name (dashes or underscores). Each command
writes the fully resolved config as ``config.resolved`` into the output
directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import io
from .kernels import KernelSpec
from .operator import (
    DivergenceError,
    load_model,
    predict_batch,
    predict_trajectory,
    save_model,
    train,
)
from .paramid import ParameterMesh, identify, mse_distance_table
from .systems import (
    RNG_ALGORITHM,
    SamplingConfig,
    augmented_duffing,
    generate_query,
    generate_training,
    scalar_pole_system,
    uniform_controls,
)

logger = logging.getLogger("kpid")

SYSTEMS = {
    "duffing": augmented_duffing,
    "pole": scalar_pole_system,
}

# per-system defaults that differ from the Duffing experiment
SYSTEM_DEFAULTS = {
    "pole": {
        "state_box": "-1:1,0.4:1.0",
        "control_box": "-1:1",
        "query_control_box": "-1:1",
        "query_x0": "0.5",
        "truth": "0.7",
        "mesh_lower": "0.4",
        "mesh_upper": "1.0",
        "mesh_spacing": "0.05",
        "offgrid_lower": "0.425",
        "offgrid_upper": "0.975",
        "samples": "500",
    },
}


@dataclass
class RunConfig:
    system: str = "duffing"
    out_dir: str = "run"
    train_data: str = ""
    query_data: str = ""
    model_dir: str = ""
    kernel: str = "gaussian"
    width: float = 20.0
    eps: float = 1e-6
    samples: int = 20000
    state_box: str = "-3:3"
    control_box: str = "-2:2"
    dt: float = 0.1
    seed: int = 0
    query_steps: int = 50
    query_x0: str = "1,0"
    query_control_box: str = "-2:2"
    query_seed: int = 1
    truth: str = "1,-1,0"
    mesh_lower: str = "-3"
    mesh_upper: str = "3"
    mesh_spacing: str = "0.5"
    offgrid_lower: str = "-3.3"
    offgrid_upper: str = "2.7"
    tag: str = ""
    rollout_params: str = ""

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def path(self, key: str, default: str) -> Path:
        value = getattr(self, key)
        return Path(value) if value else self.out / default


class CliError(Exception):
    """Failure reported to the user with a one-line message."""


def _vector(text) -> np.ndarray:
    text = str(text).strip()
    if not text:
        return np.zeros(0)
    return np.array([float(v) for v in text.split(",")])


def _box(text, dim) -> np.ndarray:
    rows = []
    for part in str(text).split(","):
        lo, sep, hi = part.partition(":")
        if not sep:
            raise CliError(f"box entry {part!r} must look like low:high")
        rows.append((float(lo), float(hi)))
    if len(rows) == 1:
        rows = rows * dim
    if len(rows) != dim:
        raise CliError(f"box {text!r} has {len(rows)} axes, expected {dim}")
    return np.array(rows)


def _axes(lower, upper, spacing, p):
    lo, hi, h = (_vector(v) for v in (lower, upper, spacing))
    lo, hi, h = (np.broadcast_to(v, (p,)) if v.size == 1 else v for v in (lo, hi, h))
    if not (lo.size == hi.size == h.size == p):
        raise CliError(f"mesh bounds must have 1 or {p} entries")
    return ParameterMesh(tuple(zip(lo, hi, h)))


def resolve_config(config_file=None, overrides=None) -> RunConfig:
    values = {}
    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise CliError(f"config file not found: {path}")
        values.update(io.read_keyvalue(path))
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    system = overrides.get("system", values.get("system", RunConfig.system))
    if system not in SYSTEMS:
        raise CliError(f"unknown system {system!r}; choose from {sorted(SYSTEMS)}")
    merged = dict(SYSTEM_DEFAULTS.get(system, {}))
    merged.update(values)
    merged.update(overrides)
    known = {f.name: f for f in fields(RunConfig)}
    kwargs = {}
    for key, value in merged.items():
        key = key.replace("-", "_")
        if key not in known:
            raise CliError(f"unknown config key {key!r}")
        typ = known[key].type
        try:
            kwargs[key] = {"int": int, "float": float}.get(typ, str)(value)
        except ValueError:
            raise CliError(f"bad value for {key}: {value!r}") from None
    return RunConfig(**kwargs)


@contextmanager
def _output_dir(cfg: RunConfig):
    cfg.out.mkdir(parents=True, exist_ok=True)
    lock = cfg.out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(f"output directory {cfg.out} is locked by another run") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        io.write_keyvalue(cfg.out / "config.resolved", dataclasses.asdict(cfg))
        yield cfg.out
    finally:
        lock.unlink(missing_ok=True)


def _system(cfg):
    return SYSTEMS[cfg.system]()


def _query_controls(cfg, m):
    box = _box(cfg.query_control_box, m)
    return uniform_controls(cfg.query_steps, box[:, 0], box[:, 1], cfg.query_seed, m)


def _mesh(cfg, p, offgrid=False):
    lower = cfg.offgrid_lower if offgrid else cfg.mesh_lower
    upper = cfg.offgrid_upper if offgrid else cfg.mesh_upper
    return _axes(lower, upper, cfg.mesh_spacing, p)


# -- commands -----------------------------------------------------------------

def cmd_generate(cfg: RunConfig, what="both"):
    sys_ = _system(cfg)
    written = []
    if what in ("both", "train"):
        sc = SamplingConfig(
            samples=cfg.samples,
            state_box=_box(cfg.state_box, sys_.n + sys_.p),
            control_box=_box(cfg.control_box, sys_.m),
            dt=cfg.dt,
            seed=cfg.seed,
        )
        data = generate_training(sys_, sc)
        path = cfg.path("train_data", "train.csv")
        io.write_dataset(path, data, {
            "system": cfg.system, "rng": RNG_ALGORITHM, "seed": cfg.seed,
            "dt": io.fmt(cfg.dt),
        })
        written.append(path)
    if what in ("both", "query"):
        q = generate_query(
            sys_, _vector(cfg.query_x0), _vector(cfg.truth),
            _query_controls(cfg, sys_.m), dt=cfg.dt,
            box=_box(cfg.state_box, sys_.n + sys_.p),
        )
        path = cfg.path("query_data", "query.csv")
        io.write_query(path, q, {
            "system": cfg.system, "rng": RNG_ALGORITHM, "control_seed": cfg.query_seed,
            "control_box": cfg.query_control_box, "x0": cfg.query_x0,
            "dt": io.fmt(cfg.dt),
        })
        written.append(path)
    return written


def cmd_train(cfg: RunConfig):
    path = cfg.path("train_data", "train.csv")
    if not path.exists():
        raise CliError(f"training data not found: {path}")
    data = io.read_dataset(path)
    kernel = KernelSpec(cfg.kernel, cfg.width)
    t0 = time.perf_counter()
    model = train(data, kernel, cfg.eps)
    wall = time.perf_counter() - t0
    model_dir = cfg.path("model_dir", "model")
    save_model(model, model_dir)

    # round-trip check on a few training points
    loaded = load_model(model_dir)
    k = min(len(data), 16)
    a = predict_batch(model, data.X[:k], data.U[:k])
    b = predict_batch(loaded, data.X[:k], data.U[:k])
    roundtrip = float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))
    if roundtrip > 1e-12:
        raise CliError(f"model round-trip mismatch {roundtrip:.3e}")

    resid = np.linalg.norm(predict_batch(model, data.X, data.U) - data.Y, axis=1)
    report = {
        "M": model.dims.M,
        "n": model.dims.n,
        "p": model.dims.p,
        "m": model.dims.m,
        "effective_rank": model.effective_rank,
        "reconstruction_residual": model.reconstruction_residual,
        "roundtrip_error": roundtrip,
        "sigma_max": float(model.Sigma[0]),
        "sigma_min": float(model.Sigma[-1]),
        "train_residual_median": float(np.median(resid)),
        "train_residual_max": float(np.max(resid)),
    }
    io.write_keyvalue(cfg.out / "train_report", report,
                      comments=[f"wall_time_seconds={wall:.3f}"])
    return model, report


def _load_inputs(cfg):
    model_dir = cfg.path("model_dir", "model")
    query_path = cfg.path("query_data", "query.csv")
    if not (model_dir / "meta").exists():
        raise CliError(f"model directory not found: {model_dir}")
    if not query_path.exists():
        raise CliError(f"query data not found: {query_path}")
    return load_model(model_dir), io.read_query(query_path)


def cmd_identify(cfg: RunConfig, offgrid=False, model=None, query=None):
    if model is None:
        model, query = _load_inputs(cfg)
    p = model.dims.p
    mesh = _mesh(cfg, p, offgrid)
    truth = _vector(cfg.truth) if cfg.truth else None
    if truth is not None and truth.size != p:
        raise CliError(f"truth has {truth.size} entries, model has {p} parameters")
    result = identify(model, query, mesh, reference=truth)

    tag = cfg.tag or ("offgrid" if offgrid else "")
    suffix = f"_{tag}" if tag else ""
    items = {
        "best_node": result.best_node,
        "best_mse": result.best_mse,
        "nodes": len(result.mse),
        "nonfinite_nodes": int(result.nonfinite.sum()),
    }
    if truth is not None:
        items["best_distance"] = float(np.linalg.norm(result.best_node - truth))
    io.write_keyvalue(cfg.out / f"result{suffix}", items)
    io.write_dat(cfg.out / f"mse_table{suffix}.dat",
                 np.column_stack((result.nodes, result.mse)),
                 comments=["node coordinates..., mse"])
    if truth is not None:
        io.write_dat(cfg.out / f"mse_vs_distance{suffix}.dat",
                     mse_distance_table(result, truth), comments=["distance mse"])
    return result


def cmd_rollout(cfg: RunConfig, model=None):
    if model is None:
        model_dir = cfg.path("model_dir", "model")
        if not (model_dir / "meta").exists():
            raise CliError(f"model directory not found: {model_dir}")
        model = load_model(model_dir)
    sys_ = _system(cfg)
    truth = _vector(cfg.truth)
    start = _vector(cfg.rollout_params) if cfg.rollout_params else truth
    z0 = _vector(cfg.query_x0)
    controls = _query_controls(cfg, sys_.m)
    true_traj = np.concatenate((z0, truth))[None, :]
    if controls.shape[0]:
        q = generate_query(sys_, z0, truth, controls, dt=cfg.dt)
        params = np.broadcast_to(truth, (q.N, truth.size))
        true_traj = np.vstack((true_traj, np.hstack((q.W, params))))
    time_col = cfg.dt * np.arange(true_traj.shape[0])[:, None]

    diverged = None
    try:
        pred = predict_trajectory(model, np.concatenate((z0, start)), controls)
    except DivergenceError as exc:
        diverged = exc
        pred = np.full_like(true_traj, np.nan)
    notes = [f"diverged at step {diverged.step}"] if diverged else []
    cols = "time " + " ".join(f"x{i + 1}" for i in range(true_traj.shape[1]))
    io.write_dat(cfg.out / "trajectory_true.dat", np.hstack((time_col, true_traj)), [cols])
    io.write_dat(cfg.out / "trajectory_pred.dat", np.hstack((time_col, pred)), [cols] + notes)
    io.write_dat(cfg.out / "trajectory_error.dat",
                 np.hstack((time_col, true_traj - pred)), [cols] + notes)
    if diverged:
        raise diverged
    return true_traj, pred


def cmd_sweep(cfg: RunConfig):
    cmd_generate(cfg)
    model, _ = cmd_train(cfg)
    query = io.read_query(cfg.path("query_data", "query.csv"))
    ongrid = cmd_identify(cfg, offgrid=False, model=model, query=query)
    offgrid = cmd_identify(cfg, offgrid=True, model=model, query=query)
    if not cfg.rollout_params:
        cfg = dataclasses.replace(cfg, rollout_params=",".join(io.fmt(v) for v in ongrid.best_node))
    cmd_rollout(cfg, model=model)
    return ongrid, offgrid


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("generate", "write training and/or query CSV files"),
        ("train", "train a model from a training CSV"),
        ("identify", "identify parameters over a mesh"),
        ("rollout", "compare true and predicted trajectories"),
        ("sweep", "run the on-grid and off-grid experiments end to end"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value config file")
        for f in fields(RunConfig):
            p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None)
        if name == "generate":
            p.add_argument("--what", choices=("both", "train", "query"), default="both")
        if name == "identify":
            p.add_argument("--offgrid", action="store_true",
                           help="use offgrid-lower/offgrid-upper bounds")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    try:
        cfg = resolve_config(args.config, overrides)
        with _output_dir(cfg):
            if args.command == "generate":
                cmd_generate(cfg, args.what)
            elif args.command == "train":
                cmd_train(cfg)
            elif args.command == "identify":
                result = cmd_identify(cfg, offgrid=args.offgrid)
                print("best_node=" + ",".join(io.fmt(v) for v in result.best_node))
                print(f"best_mse={io.fmt(result.best_mse)}")
            elif args.command == "rollout":
                cmd_rollout(cfg)
            elif args.command == "sweep":
                ongrid, offgrid = cmd_sweep(cfg)
                print("ongrid_best_node=" + ",".join(io.fmt(v) for v in ongrid.best_node))
                print("offgrid_best_node=" + ",".join(io.fmt(v) for v in offgrid.best_node))
    except Exception as exc:  # noqa: BLE001 - single exit point for the CLI
        if args.verbose:
            logger.exception("command failed")
        print(f"error: {type(exc).__name__}: {exc}".splitlines()[0], file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
