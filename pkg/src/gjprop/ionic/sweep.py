"""Two-condition clamp sweeps over a (g, k) grid.

Condition 1 holds the upstream cell at ``v_F`` for the whole run.
Condition 2 holds it at ``v_F`` only until the first driven cell reaches
``v_E`` and then clamps it to rest.  A large drop in the observed cell's
maximum from condition 1 to 2 marks propagation that needs the upstream
drive to finish the spike, the semi-active signature.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..cubic import ExcitableCurrent, Landmarks
from ..network import ClampProtocol, EventRelease, ScalarDynamics, integrate_batch
from ..regions import DomainError, PropagationClass, adjust_boundary, k_exc, k_max
from ..treemap import k_prop
from .model import IonicModel
from .reduction import ReducedCurrent, full_dynamics, reduce_to_1d, resting_state

__all__ = ["SweepResult", "condition_sweep", "boundary_overlays", "default_timing", "SWEEP_COLUMNS"]

SWEEP_COLUMNS = ("g", "k", "vmax1", "vmax2", "diff", "status", "class")


@dataclass
class SweepResult:
    """Grid of condition-1/condition-2 maxima, indexed ``[i_g, i_k]``."""

    g: np.ndarray
    k: np.ndarray
    vmax1: np.ndarray
    vmax2: np.ndarray
    vend1: np.ndarray
    vend2: np.ndarray
    status: np.ndarray
    landmarks: Landmarks | None
    network: str = "single"
    mode: str = "reduced"
    overlays: dict = field(default_factory=dict)

    @property
    def diff(self) -> np.ndarray:
        return self.vmax1 - self.vmax2

    @property
    def amplitude(self) -> float:
        return self.landmarks.v_F

    def fires1(self, threshold: float | None = None) -> np.ndarray:
        """Default firing predicate: condition-1 maximum above ``v_E``."""
        th = self.landmarks.v_E if threshold is None else threshold
        return self.vmax1 > th

    def semi_band(self, frac: float = 0.25) -> np.ndarray:
        return self.diff > frac * self.amplitude

    def classes(self, rule: str = "difference", frac: float = 0.25, threshold: float | None = None) -> np.ndarray:
        """Per-point propagation class.

        ``rule="difference"`` calls a firing point semi-active when the
        maximum drops by more than ``frac`` of the spike amplitude without
        the upstream drive.  ``rule="sustained"`` instead asks whether the
        observed cell stays above ``v_E`` at the end of condition 2, which
        suits scalar currents that have no recovery.
        """
        fired = self.fires1(threshold)
        if rule == "difference":
            semi = self.semi_band(frac)
        elif rule == "sustained":
            semi = ~(self.vend2 > self.landmarks.v_E)
        else:
            raise ValueError(f"unknown rule {rule!r}")
        out = np.full(self.vmax1.shape, PropagationClass.PASSIVE, dtype=object)
        out[fired & semi] = PropagationClass.SEMI_ACTIVE
        out[fired & ~semi] = PropagationClass.ACTIVE
        return out

    def rows(self, rule: str = "difference", frac: float = 0.25):
        """Rows in g-major order, overlay columns appended."""
        if self.g.size == 0 or self.k.size == 0:
            return
        cls = self.classes(rule, frac)
        names = list(self.overlays)
        for i, g in enumerate(self.g):
            extra = [self.overlays[n][i] for n in names]
            for j, k in enumerate(self.k):
                yield [g, k, self.vmax1[i, j], self.vmax2[i, j], self.diff[i, j], self.status[i, j], str(cls[i, j])] + extra

    def write_csv(self, out, comment: str | None = None, rule: str = "difference", frac: float = 0.25) -> None:
        if comment:
            out.write(f"# {comment}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(list(SWEEP_COLUMNS) + list(self.overlays))
        for row in self.rows(rule, frac):
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _nan_on_domain(fn, *args):
    try:
        return fn(*args)
    except DomainError:
        return math.nan


def boundary_overlays(current: ExcitableCurrent, g_grid, network: str, V_u: float | None = None) -> dict:
    """Predicted boundaries at each ``g``: ``k_max``/``k_exc`` for a single
    cell, ``k_prop``/``k_exc`` and their attenuation-adjusted versions for
    the tree, with ``g_L`` the linearised leak ``|F'(0)|``."""
    g_grid = np.asarray(g_grid, dtype=float)
    lm = current.landmarks
    V_u = lm.v_F if V_u is None else V_u
    kexc = np.array([k_exc(current, g) for g in g_grid])
    if network == "single":
        kmax = np.array([_nan_on_domain(k_max, current, V_u, g) for g in g_grid])
        return {"k_max": kmax, "k_exc": kexc}
    g_L = abs(float(current.df(0.0)))
    kp = np.array([_nan_on_domain(k_prop, current, g) for g in g_grid])

    def adjusted(k0, g):
        if not (k0 >= 0.0):
            return math.nan
        return _nan_on_domain(adjust_boundary, k0, g, g_L)

    return {
        "k_prop": kp,
        "k_exc": kexc,
        "k_prop_adj": np.array([adjusted(a, g) for a, g in zip(kp, g_grid)]),
        "k_exc_adj": np.array([adjusted(a, g) for a, g in zip(kexc, g_grid)]),
    }


def default_timing(model) -> tuple[float, float]:
    """``(dt, t_end)`` used when a sweep leaves them unset: ms-scale steps
    for ionic models, the cubic's dimensionless scale otherwise."""
    if isinstance(model, (IonicModel, ReducedCurrent)):
        return 0.001, 50.0
    return 0.01, 200.0


def _run_chunk(args):
    dyn, g, k, n_cells, protocol, dt, t_end, observe, feedforward = args
    with np.errstate(all="ignore"):
        res = integrate_batch(dyn, g, k, n_cells, protocol, dt, t_end, stride=None, feedforward=feedforward)
    return res.vmax[:, observe], res.final[:, observe, 0]


def _batched(dyn, g, k, n_cells, protocol, dt, t_end, observe, feedforward, jobs):
    n = g.size
    if jobs <= 1 or n < 2:
        return _run_chunk((dyn, g, k, n_cells, protocol, dt, t_end, observe, feedforward))
    bounds = np.linspace(0, n, min(jobs, n) + 1).astype(int)
    tasks = [
        (dyn, g[a:b], k[a:b], n_cells, protocol, dt, t_end, observe, feedforward)
        for a, b in zip(bounds[:-1], bounds[1:])
    ]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_run_chunk, tasks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def condition_sweep(
    model,
    g_grid,
    k_grid,
    mode: str = "reduced",
    network: str = "single",
    n_cells: int = 10,
    dt: float | None = None,
    t_end: float | None = None,
    V_u: float | None = None,
    jobs: int = 1,
    feedforward: bool = False,
) -> SweepResult:
    """Run both clamp conditions at every ``(g, k)`` of the grid.

    ``model`` is an :class:`IonicModel` or a scalar current such as
    :class:`~gjprop.cubic.CubicCell`.  ``mode`` picks the full gated
    dynamics or the reduced scalar current; ``network`` is ``"single"``
    (observe the central cell) or ``"tree"`` (a chain of ``n_cells``
    observed at its penultimate cell).  Points whose integration leaves
    the finite range are flagged in ``status`` rather than aborting.
    """
    if mode not in ("full", "reduced"):
        raise ValueError(f"mode must be 'full' or 'reduced', got {mode!r}")
    if network not in ("single", "tree"):
        raise ValueError(f"network must be 'single' or 'tree', got {network!r}")
    g_grid = np.asarray(g_grid, dtype=float).ravel()
    k_grid = np.asarray(k_grid, dtype=float).ravel()

    if isinstance(model, IonicModel):
        rest = resting_state(model)
        current: ExcitableCurrent = reduce_to_1d(model, rest)
        dyn = full_dynamics(model, rest) if mode == "full" else ScalarDynamics(current)
    elif isinstance(model, ExcitableCurrent):
        if mode == "full":
            raise ValueError("a scalar current has no gates; use mode='reduced'")
        current = model
        dyn = ScalarDynamics(current)
    else:
        raise TypeError(f"cannot sweep {type(model).__name__}")
    dt0, t_end0 = default_timing(model)
    dt = dt0 if dt is None else dt
    t_end = t_end0 if t_end is None else t_end

    shape = (g_grid.size, k_grid.size)
    if 0 in shape:
        empty = np.empty(shape)
        return SweepResult(
            g_grid, k_grid, empty, empty.copy(), empty.copy(), empty.copy(),
            np.empty(shape, dtype=object), None, network, mode, {},
        )

    lm = current.landmarks
    V_u = lm.v_F if V_u is None else V_u
    chain = 1 if network == "single" else n_cells
    observe = 1 if network == "single" else max(chain - 1, 1)
    G, K = np.meshgrid(g_grid, k_grid, indexing="ij")
    g_flat, k_flat = G.ravel(), K.ravel()

    cond1 = ClampProtocol.constant(V_u)
    cond2 = ClampProtocol.constant(V_u, release=EventRelease(threshold=lm.v_E, v_after=0.0, observe=1))
    vmax1, vend1 = _batched(dyn, g_flat, k_flat, chain, cond1, dt, t_end, observe, feedforward, jobs)
    vmax2, vend2 = _batched(dyn, g_flat, k_flat, chain, cond2, dt, t_end, observe, feedforward, jobs)

    finite = np.isfinite(vmax1) & np.isfinite(vmax2) & np.isfinite(vend1) & np.isfinite(vend2)
    status = np.where(finite, "ok", "nonfinite").astype(object)
    return SweepResult(
        g=g_grid,
        k=k_grid,
        vmax1=vmax1.reshape(shape),
        vmax2=vmax2.reshape(shape),
        vend1=vend1.reshape(shape),
        vend2=vend2.reshape(shape),
        status=status.reshape(shape),
        landmarks=lm,
        network=network,
        mode=mode,
        overlays=boundary_overlays(current, g_grid, network, V_u),
    )
