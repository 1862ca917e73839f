"""Shared state/control/trajectory types, seeded RNG streams, and persistence.

State convention (n = 6): (p_x, p_z, phi, v_x, v_z, phi_dot) with positions in
meters, roll in radians, body-frame velocities in m/s, roll rate in rad/s.
Control convention (m = 2): two thrusts in Newtons.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ParseError, VersionError

N_STATES = 6
N_CONTROLS = 2

DATASET_HEADER = [
    "traj_id", "t",
    "px", "pz", "phi", "vx", "vz", "phidot",
    "u1", "u2",
    "dpx", "dpz", "dphi", "dvx", "dvz", "dphidot",
]

RESULTS_HEADER = ["model", "N", "ic", "rms", "diverged", "trajopt_status", "final_err", "T"]

MODEL_SCHEMA = "ccmlearn/certified-model"
MODEL_VERSION = 1


def as_state(x) -> np.ndarray:
    """Validate and return a finite length-6 state vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (N_STATES,):
        raise ValueError(f"state vector must have shape ({N_STATES},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state vector has non-finite entries")
    return x


def as_control(u) -> np.ndarray:
    """Validate and return a finite length-2 control vector."""
    u = np.asarray(u, dtype=float)
    if u.shape != (N_CONTROLS,):
        raise ValueError(f"control vector must have shape ({N_CONTROLS},), got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("control vector has non-finite entries")
    return u


# ---------------------------------------------------------------------------
# Seeded random streams
# ---------------------------------------------------------------------------

# Fixed purpose tags so changing one experiment knob cannot perturb draws
# made for a different purpose.
_STREAM_TAGS = {
    "features_f": 1,
    "features_w": 2,
    "features_w_hat": 3,
    "waypoints": 4,
    "initial_conditions": 5,
    "constraint_points": 6,
    "rand_sample": 7,
    "benchmark_ic": 8,
    "label_noise": 9,
    "test": 99,
}


def rng_stream(seed: int, purpose: str) -> np.random.Generator:
    """Derive a named, reproducible random stream from a root seed."""
    try:
        tag = _STREAM_TAGS[purpose]
    except KeyError:
        raise ConfigError(f"unknown random stream purpose {purpose!r}") from None
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(tag,)))


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingTuple:
    """One demonstration sample (x, u, xdot)."""

    x: np.ndarray
    u: np.ndarray
    xdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", as_state(self.x))
        object.__setattr__(self, "u", as_control(self.u))
        xdot = np.asarray(self.xdot, dtype=float)
        if xdot.shape != (N_STATES,) or not np.all(np.isfinite(xdot)):
            raise ValueError("xdot must be a finite length-6 vector")
        object.__setattr__(self, "xdot", xdot)


@dataclass
class Dataset:
    """Collection of demonstration tuples with per-tuple trajectory labels."""

    tuples: list
    traj_ids: list
    sample_dt: float = 0.1

    def __post_init__(self):
        if len(self.tuples) != len(self.traj_ids):
            raise ValueError("traj_ids length must equal tuples length")
        if self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")

    def __len__(self):
        return len(self.tuples)

    def states(self) -> np.ndarray:
        return np.array([t.x for t in self.tuples]).reshape(len(self.tuples), N_STATES)

    def controls(self) -> np.ndarray:
        return np.array([t.u for t in self.tuples]).reshape(len(self.tuples), N_CONTROLS)

    def xdots(self) -> np.ndarray:
        return np.array([t.xdot for t in self.tuples]).reshape(len(self.tuples), N_STATES)

    def subset(self, n: int) -> "Dataset":
        """Deterministic size-n subset, spread evenly over the whole dataset."""
        if n >= len(self.tuples):
            return self
        idx = np.unique(np.round(np.linspace(0, len(self.tuples) - 1, n)).astype(int))
        return Dataset([self.tuples[i] for i in idx],
                       [self.traj_ids[i] for i in idx], self.sample_dt)


@dataclass
class Trajectory:
    """Sampled state/control history.

    Controls follow the zero-order-hold convention: one control per step, so
    ``len(controls) == len(states) - 1``.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if len(self.controls) != max(len(self.states) - 1, 0):
            raise ValueError("controls must be one shorter than states (zero-order hold)")

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass
class TrainerConfig:
    """Settings for the alternating certificate-regularized fit.

    Defaults follow the benchmark configuration: regression weights
    (mu_f, mu_b, mu_w), slack weight mu_s, the four constraint tolerances,
    the discard tolerance, exchange-step caps and termination settings.
    """

    mu_f: float = 1e-3
    mu_b: float = 1e-6
    mu_w: float = 1e-3
    mu_s: float = 1.0
    delta_lambda: float = 0.01
    eps_lambda: float = 0.01
    delta_wlow: float = 0.01
    eps_wlow: float = 0.01
    delta_discard: float = 0.05
    K_max_add: int = 50
    N_max: int = 30
    eps_converge: float = 0.01
    Nc0: int = 100
    seed: int = 0
    iter_time_limit: float = 120.0

    def __post_init__(self):
        positive = ["mu_b", "mu_w", "mu_s", "delta_lambda", "eps_lambda",
                    "delta_wlow", "eps_wlow", "delta_discard", "eps_converge"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.mu_f < 0:
            raise ConfigError("mu_f must be >= 0")
        if self.K_max_add < 1:
            raise ConfigError("K_max_add must be >= 1")
        if self.N_max < 0 or self.Nc0 < 0:
            raise ConfigError("N_max and Nc0 must be >= 0")


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------
#
# Datasets and results tables are CSV; models and configs are JSON documents
# with an explicit schema/version field.  Reals are written as full-precision
# decimal text (repr), which round-trips float64 exactly.


def _fmt(x) -> str:
    return repr(float(x))


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_HEADER)
        t_by_traj = {}
        for tup, tid in zip(ds.tuples, ds.traj_ids):
            k = t_by_traj.get(tid, 0)
            t_by_traj[tid] = k + 1
            row = [int(tid), _fmt(k * ds.sample_dt)]
            row += [_fmt(v) for v in tup.x] + [_fmt(v) for v in tup.u] + [_fmt(v) for v in tup.xdot]
            writer.writerow(row)


def load_dataset(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DATASET_HEADER:
            raise ParseError(f"unexpected dataset header {header!r}")
        tuples, traj_ids, times = [], [], []
        for i, row in enumerate(reader):
            if len(row) != len(DATASET_HEADER):
                raise ParseError(f"dataset row {i} has {len(row)} fields, expected {len(DATASET_HEADER)}")
            try:
                traj_ids.append(int(row[0]))
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(f"dataset row {i}: {exc}") from None
            times.append(vals[0])
            tuples.append(TrainingTuple(vals[1:7], vals[7:9], vals[9:15]))
    sample_dt = 0.1
    for j in range(1, len(times)):
        if traj_ids[j] == traj_ids[j - 1]:
            sample_dt = times[j] - times[j - 1]
            break
    return Dataset(tuples, traj_ids, sample_dt)


def _basis_to_dict(basis) -> dict:
    return {
        "sigma": basis.sigma,
        "s": int(basis.s),
        "active_dims": [int(i) for i in basis.active_dims],
        "omegas": basis.omegas.tolist(),
    }


def _basis_from_dict(d, where: str):
    from .features import RFFBasis
    try:
        return RFFBasis(omegas=np.array(d["omegas"], dtype=float),
                        sigma=float(d["sigma"]),
                        active_dims=np.array(d["active_dims"], dtype=int))
    except KeyError as exc:
        raise ParseError(f"model file: missing field {exc.args[0]!r} in {where}") from None


def save_model(model, path) -> None:
    """Write a certified model (dynamics + metric + rate) as JSON."""
    doc = {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "lambda": model.lam,
        "dynamics": {
            "f_basis": _basis_to_dict(model.dynamics.f_basis),
            "alpha": model.dynamics.alpha.tolist(),
            "b_consts": model.dynamics.b_consts.tolist(),
        },
        "metric": {
            "w_basis": _basis_to_dict(model.metric.w_basis),
            "w_hat_basis": _basis_to_dict(model.metric.w_hat_basis),
            "theta": model.metric.theta.tolist(),
            "theta_hat": model.metric.theta_hat.tolist(),
            "w_low": model.metric.w_low,
            "w_high": model.metric.w_high,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    from .models import CertifiedModel, DynamicsModel, MetricModel
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"model file is not valid JSON: {exc}") from None
    if doc.get("schema") != MODEL_SCHEMA:
        raise ParseError(f"model file: unexpected schema {doc.get('schema')!r}")
    if doc.get("version") != MODEL_VERSION:
        raise VersionError(f"model file version {doc.get('version')!r}, expected {MODEL_VERSION}")
    try:
        dyn = DynamicsModel(
            f_basis=_basis_from_dict(doc["dynamics"]["f_basis"], "dynamics.f_basis"),
            alpha=np.array(doc["dynamics"]["alpha"], dtype=float),
            b_consts=np.array(doc["dynamics"]["b_consts"], dtype=float),
        )
        met = MetricModel(
            w_basis=_basis_from_dict(doc["metric"]["w_basis"], "metric.w_basis"),
            w_hat_basis=_basis_from_dict(doc["metric"]["w_hat_basis"], "metric.w_hat_basis"),
            theta=np.array(doc["metric"]["theta"], dtype=float),
            theta_hat=np.array(doc["metric"]["theta_hat"], dtype=float),
            w_low=float(doc["metric"]["w_low"]),
            w_high=float(doc["metric"]["w_high"]),
        )
        return CertifiedModel(dynamics=dyn, metric=met, lam=float(doc["lambda"]))
    except KeyError as exc:
        raise ParseError(f"model file: missing field {exc.args[0]!r}") from None


def save_results(rows: list, path) -> None:
    """Write benchmark rows (ResultsRow objects) as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in rows:
            writer.writerow([
                r.model_kind, int(r.n_train), int(r.ic_index), _fmt(r.rms_error),
                int(r.diverged), r.trajopt_status, _fmt(r.final_error), _fmt(r.T),
            ])


def load_results(path) -> list:
    from .harness import ResultsRow
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise ParseError(f"unexpected results header {header!r}")
        for i, row in enumerate(reader):
            if len(row) != len(RESULTS_HEADER):
                raise ParseError(f"results row {i} has {len(row)} fields")
            try:
                rows.append(ResultsRow(
                    model_kind=row[0], n_train=int(row[1]), ic_index=int(row[2]),
                    rms_error=float(row[3]), diverged=bool(int(row[4])),
                    trajopt_status=row[5], final_error=float(row[6]), T=float(row[7]),
                ))
            except ValueError as exc:
                raise ParseError(f"results row {i}: {exc}") from None
    return rows


def save(artifact, path) -> None:
    """Persist a Dataset, certified model, or results-row list by type."""
    from .models import CertifiedModel
    if isinstance(artifact, Dataset):
        save_dataset(artifact, path)
    elif isinstance(artifact, CertifiedModel):
        save_model(artifact, path)
    elif isinstance(artifact, list):
        save_results(artifact, path)
    else:
        raise TypeError(f"don't know how to persist {type(artifact).__name__}")


def load(path):
    """Load a persisted artifact, dispatching on file content."""
    with open(path) as fh:
        head = fh.read(1)
    if head == "{":
        return load_model(path)
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header == DATASET_HEADER:
        return load_dataset(path)
    if header == RESULTS_HEADER:
        return load_results(path)
    raise ParseError(f"unrecognized artifact file {path}")


def save_config(cfg, path) -> None:
    doc = {"schema": f"ccmlearn/{type(cfg).__name__}", "version": 1}
    doc.update(asdict(cfg))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_config(cls, path):
    with open(path) as fh:
        doc = json.load(fh)
    doc.pop("schema", None)
    version = doc.pop("version", 1)
    if version != 1:
        raise VersionError(f"config version {version!r}, expected 1")
    unknown = set(doc) - set(cls.__dataclass_fields__)
    if unknown:
        raise ParseError(f"config file: unknown fields {sorted(unknown)}")
    return cls(**doc)
