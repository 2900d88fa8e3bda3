"""Fixed-step simulation of gap-junction-coupled cells under voltage clamp.

Cell 0 is the clamped upstream cell, cells ``1..n`` are dynamic.  Cell ``j``
receives ``g (v_{j-1} - v_j)`` from upstream and ``g k (v_{j+1} - v_j)``
from downstream; the last cell's downstream neighbours sit at rest, so its
downstream term is ``-g k v_n``.  A single cell is the chain with ``n = 1``.

All integration is classical RK4 on a uniform grid and vectorised over a
batch of ``(g, k)`` pairs, which is how parameter sweeps run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .cubic import ExcitableCurrent, Landmarks
from .regions import PropagationClass

__all__ = [
    "CellDynamics",
    "ScalarDynamics",
    "as_dynamics",
    "EventRelease",
    "ClampProtocol",
    "ChainConfig",
    "Trajectory",
    "BatchResult",
    "TrajectoryTooShort",
    "integrate_batch",
    "simulate_single",
    "simulate_chain",
    "classify_trajectory",
    "write_trajectory_csv",
]

REST_TOL = 1e-3


class CellDynamics(Protocol):
    """Intrinsic dynamics of one cell; state column 0 is the voltage."""

    n_vars: int
    membrane_tau: float

    def rest_state(self) -> np.ndarray: ...

    def derivatives(self, state: np.ndarray) -> np.ndarray: ...


class ScalarDynamics:
    """A scalar current ``dv/dt = F(v)`` as one-variable cell dynamics."""

    n_vars = 1

    def __init__(self, current: ExcitableCurrent):
        self.current = current
        slope = float(current.df(0.0))
        self.membrane_tau = 1.0 / abs(slope) if slope else math.inf

    def rest_state(self) -> np.ndarray:
        return np.zeros(1)

    def derivatives(self, state: np.ndarray) -> np.ndarray:
        return self.current.f(state)


def as_dynamics(obj) -> CellDynamics:
    if isinstance(obj, ExcitableCurrent):
        return ScalarDynamics(obj)
    if hasattr(obj, "derivatives") and hasattr(obj, "rest_state"):
        return obj
    raise TypeError(f"cannot simulate {type(obj).__name__}; expected a current or cell dynamics")


@dataclass(frozen=True)
class EventRelease:
    """Switch the clamp to ``v_after`` once cell ``observe`` reaches ``threshold``.

    With ``free_upstream`` the upstream cell is no longer clamped after the
    trigger and evolves under its own dynamics, coupled to cell 1.
    """

    threshold: float
    v_after: float = 0.0
    observe: int = 1
    free_upstream: bool = False


@dataclass(frozen=True)
class ClampProtocol:
    """Piecewise-constant upstream voltage; the last value holds afterwards."""

    segments: tuple[tuple[float, float], ...]
    release: EventRelease | None = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("a clamp protocol needs at least one segment")
        for duration, _ in self.segments:
            if not duration > 0.0:
                raise ValueError(f"segment durations must be positive, got {duration!r}")
        object.__setattr__(self, "segments", tuple((float(d), float(v)) for d, v in self.segments))

    @classmethod
    def constant(cls, v_u: float, release: EventRelease | None = None) -> "ClampProtocol":
        return cls(((math.inf, v_u),), release)

    @classmethod
    def pulse(cls, v_u: float, duration: float, after: float = 0.0) -> "ClampProtocol":
        return cls(((duration, v_u), (math.inf, after)))

    def value_at(self, t: float) -> float:
        end = 0.0
        for duration, v_u in self.segments:
            end += duration
            if t < end:
                return v_u
        return self.segments[-1][1]

    def to_dict(self) -> dict:
        out: dict = {"segments": [[d if math.isfinite(d) else "inf", v] for d, v in self.segments]}
        if self.release is not None:
            out["release"] = {
                "threshold": self.release.threshold,
                "v_after": self.release.v_after,
                "observe": self.release.observe,
                "free_upstream": self.release.free_upstream,
            }
        return out


@dataclass(frozen=True)
class ChainConfig:
    """Chain geometry.  ``feedforward=True`` holds every cell's downstream
    neighbours at rest (the iterated-map assumption) instead of coupling
    each cell to the next one."""

    n_cells: int
    g: float
    k: float
    feedforward: bool = False

    def __post_init__(self):
        if self.n_cells < 1:
            raise ValueError(f"n_cells must be at least 1, got {self.n_cells!r}")
        if not self.g > 0.0 or not self.k >= 0.0:
            raise ValueError(f"need g > 0 and k >= 0, got g={self.g!r}, k={self.k!r}")


@dataclass
class Trajectory:
    """Sampled voltages; column 0 is the upstream cell."""

    times: np.ndarray
    voltages: np.ndarray
    metadata: dict = field(default_factory=dict)

    def cell(self, j: int) -> np.ndarray:
        return self.voltages[:, j]


@dataclass
class BatchResult:
    """Outcome of :func:`integrate_batch` for ``B`` parameter pairs.

    ``vmax`` is the running maximum per cell, ``vmax_pre`` the maximum
    before the release event (equal to ``vmax`` when none fired).
    """

    times: np.ndarray | None
    voltages: np.ndarray | None  # (B, T, n+1)
    vmax: np.ndarray  # (B, n+1)
    vmax_pre: np.ndarray
    final: np.ndarray  # (B, n+1, n_vars)
    release_time: np.ndarray  # (B,), nan when not triggered
    dt: float
    t_end: float


def _chain_rhs(dyn, state, g, gk, clamped, free, feedforward=False):
    v = state[..., 0]
    d = np.asarray(dyn.derivatives(state), dtype=float).reshape(state.shape)
    g_ = g[:, None]
    gk_ = gk[:, None]
    inner = v[:, 1:]
    gap = g_ * (v[:, :-1] - inner)
    if feedforward:
        gap -= gk_ * inner
    else:
        gap[:, :-1] += gk_ * (v[:, 2:] - inner[:, :-1])
        gap[:, -1] -= gk[:] * inner[:, -1]
    d[:, 1:, 0] += gap
    if free is not None:
        # an unclamped upstream cell only sees cell 1
        d[:, 0, 0] += np.where(free, gk * (v[:, 1] - v[:, 0]), 0.0)
    d[clamped, 0, 0] = 0.0
    return d


def integrate_batch(
    dynamics,
    g,
    k,
    n_cells: int,
    protocol: ClampProtocol,
    dt: float,
    t_end: float,
    stride: int | None = 1,
    feedforward: bool = False,
) -> BatchResult:
    """Integrate ``B`` independent chains with classical RK4.

    ``g`` and ``k`` broadcast to shape ``(B,)``.  The clamp value is taken at
    each step's midpoint and held for all four stages.  ``stride=None``
    keeps only running maxima and the final state.
    """
    if not dt > 0.0 or not t_end > 0.0:
        raise ValueError(f"need dt > 0 and t_end > 0, got dt={dt!r}, t_end={t_end!r}")
    dyn = as_dynamics(dynamics)
    g, k = np.broadcast_arrays(np.atleast_1d(np.asarray(g, float)), np.atleast_1d(np.asarray(k, float)))
    g = g.copy()
    gk = g * k
    batch = g.shape[0]
    n_steps = int(round(t_end / dt))
    state = np.broadcast_to(dyn.rest_state(), (batch, n_cells + 1, dyn.n_vars)).astype(float)

    rel = protocol.release
    released = np.zeros(batch, bool)
    release_time = np.full(batch, np.nan)

    all_clamped = np.ones(batch, bool)

    def clamp_values(t):
        c = protocol.value_at(t)
        if rel is None:
            return np.full(batch, c), all_clamped
        u = np.where(released, rel.v_after, c)
        clamped = ~released if rel.free_upstream else all_clamped
        return u, clamped

    u, clamped = clamp_values(0.5 * dt)
    state[clamped, 0, 0] = u[clamped]
    vmax = state[..., 0].copy()
    vmax_pre = vmax.copy()

    keep = stride is not None
    if keep:
        times = [0.0]
        rows = [state[..., 0].copy()]

    for n in range(n_steps):
        t = n * dt
        u, clamped = clamp_values(t + 0.5 * dt)
        free = None if clamped is all_clamped else ~clamped
        state[clamped, 0, 0] = u[clamped]
        k1 = _chain_rhs(dyn, state, g, gk, clamped, free, feedforward)
        k2 = _chain_rhs(dyn, state + 0.5 * dt * k1, g, gk, clamped, free, feedforward)
        k3 = _chain_rhs(dyn, state + 0.5 * dt * k2, g, gk, clamped, free, feedforward)
        k4 = _chain_rhs(dyn, state + dt * k3, g, gk, clamped, free, feedforward)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        v = state[..., 0]
        np.fmax(vmax, v, out=vmax)
        if rel is not None:
            pre = ~released
            vmax_pre[pre] = np.fmax(vmax_pre[pre], v[pre])
            newly = pre & (v[:, rel.observe] >= rel.threshold)
            if newly.any():
                released |= newly
                release_time[newly] = (n + 1) * dt
        if keep and (n + 1) % stride == 0:
            times.append((n + 1) * dt)
            rows.append(v.copy())

    if rel is None:
        vmax_pre = vmax.copy()
    return BatchResult(
        times=np.array(times) if keep else None,
        voltages=np.stack(rows, axis=1) if keep else None,
        vmax=vmax,
        vmax_pre=vmax_pre,
        final=state,
        release_time=release_time,
        dt=dt,
        t_end=n_steps * dt,
    )


def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _trajectory(dyn, result: BatchResult, protocol, payload) -> Trajectory:
    meta = {
        "dt": result.dt,
        "t_end": result.t_end,
        "integrator": "rk4",
        "config_hash": _config_hash(payload),
        "membrane_tau": getattr(dyn, "membrane_tau", math.nan),
        "release_time": None,
        "release_triggered": None,
    }
    if protocol.release is not None:
        rt = float(result.release_time[0])
        meta["release_triggered"] = not math.isnan(rt)
        meta["release_time"] = None if math.isnan(rt) else rt
    return Trajectory(result.times, result.voltages[0], meta)


def simulate_single(
    cell_dynamics,
    g: float,
    k: float,
    protocol: ClampProtocol,
    dt: float = 0.01,
    t_end: float = 200.0,
    stride: int = 1,
) -> Trajectory:
    """One central cell driven by a clamped upstream cell, from rest.

    ``dv/dt = F(v) + g (v_u(t) - v) - g k v``.  If the protocol has a
    release rule that never triggers, ``metadata["release_triggered"]`` is
    False and the trajectory is still returned.
    """
    return simulate_chain(cell_dynamics, ChainConfig(1, g, k), protocol, dt, t_end, stride)


def simulate_chain(
    cell_dynamics,
    config: ChainConfig,
    protocol: ClampProtocol,
    dt: float = 0.01,
    t_end: float = 200.0,
    stride: int = 1,
) -> Trajectory:
    dyn = as_dynamics(cell_dynamics)
    result = integrate_batch(
        dyn, config.g, config.k, config.n_cells, protocol, dt, t_end, stride, config.feedforward
    )
    payload = {
        "n_cells": config.n_cells,
        "feedforward": config.feedforward,
        "g": config.g,
        "k": config.k,
        "protocol": protocol.to_dict(),
        "dt": dt,
        "t_end": t_end,
        "stride": stride,
        "dynamics": repr(getattr(dyn, "current", dyn)),
    }
    return _trajectory(dyn, result, protocol, payload)


class TrajectoryTooShort(ValueError):
    pass


def classify_trajectory(
    traj: Trajectory,
    release_time: float,
    landmarks: Landmarks,
    cell: int = 1,
    membrane_tau: float | None = None,
    rest_tol: float = REST_TOL,
) -> PropagationClass:
    """Classify a clamp-then-release response of cell ``cell``.

    Active when the cell stays above ``v_E`` after release, SemiActive when
    it exceeded ``v_E`` before release but returned to rest, else Passive.
    """
    tau = traj.metadata.get("membrane_tau", 1.0) if membrane_tau is None else membrane_tau
    if traj.times[-1] - release_time < 5.0 * tau:
        raise TrajectoryTooShort(
            f"trajectory ends {traj.times[-1] - release_time:.4g} after release; "
            f"need at least 5 membrane time constants ({5.0 * tau:.4g})"
        )
    v = traj.cell(cell)
    terminal = v[-1]
    pre_max = v[traj.times <= release_time].max()
    if terminal > landmarks.v_E:
        return PropagationClass.ACTIVE
    if pre_max > landmarks.v_E and abs(terminal) < rest_tol:
        return PropagationClass.SEMI_ACTIVE
    return PropagationClass.PASSIVE


def write_trajectory_csv(traj: Trajectory, out, comment: str | None = None) -> None:
    """Write ``t,v0,v1,...`` rows with round-trip float formatting.

    ``out`` is a path or a text stream.
    """
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_trajectory_csv(traj, fh, comment)
        return
    if comment:
        out.write(f"# {comment}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["t"] + [f"v{j}" for j in range(traj.voltages.shape[1])])
    for t, row in zip(traj.times, traj.voltages):
        writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def read_trajectory_csv(source) -> Trajectory:
    text = Path(source).read_text() if isinstance(source, (str, Path)) else source.read()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(io.StringIO("\n".join(lines))))
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return Trajectory(data[:, 0], data[:, 1:], {})
