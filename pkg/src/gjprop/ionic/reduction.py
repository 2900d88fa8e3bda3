"""Resting state, gate-frozen reduction to a scalar current, and landmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from ..cubic import ROOT_XTOL, ExcitableCurrent, Landmarks
from .model import FullDynamics, IonicModel, ReductionRule

__all__ = [
    "RestingState",
    "ReductionError",
    "NotExcitableError",
    "ReducedCurrent",
    "resting_state",
    "reduce_to_1d",
    "extract_landmarks",
    "time_constant_report",
    "full_dynamics",
]

SCAN_POINTS = 20001


class ReductionError(ValueError):
    pass


class NotExcitableError(ReductionError):
    """The reduced current lacks a landmark; ``landmark`` names it."""

    def __init__(self, landmark: str, detail: str = ""):
        super().__init__(f"reduced current is not excitable: no {landmark}" + (f" ({detail})" if detail else ""))
        self.landmark = landmark


@dataclass(frozen=True)
class RestingState:
    v_rest: float
    gates: dict
    residual: float
    eigenvalues: tuple[complex, ...]

    @property
    def stable(self) -> bool:
        return all(ev.real < 0 for ev in self.eigenvalues)


def _root(fun, lo, hi):
    return brentq(fun, lo, hi, xtol=ROOT_XTOL, rtol=8.881784197001252e-16, maxiter=300)


def _rest_residual(model: IonicModel, V):
    return model.ionic_current(V, model.steady_gates(V))


def resting_state(model: IonicModel, search: float = 30.0) -> RestingState:
    """Equilibrium of the full model nearest the declared resting potential.

    Gates sit at their steady states, so only ``I_ion(V, x_inf(V)) = 0``
    needs solving; sign changes are scanned in ``rest +- search`` and the
    closest one is refined.
    """
    V0 = model.resting_potential
    lo = max(model.window[0], V0 - search)
    hi = min(model.window[1], V0 + search)
    grid = np.linspace(lo, hi, 6001)
    with np.errstate(all="ignore"):
        res = _rest_residual(model, grid)
    scale = float(np.nanmax(np.abs(res))) if np.any(np.isfinite(res)) else 0.0
    if scale == 0.0:
        raise ReductionError("degenerate model: the ionic current vanishes everywhere, every voltage is an equilibrium")
    zero = np.flatnonzero(res == 0.0)
    crossings = np.flatnonzero(np.sign(res[:-1]) * np.sign(res[1:]) < 0)
    candidates = [float(grid[i]) for i in zero]
    for i in crossings:
        candidates.append(_root(lambda v: float(_rest_residual(model, v)), grid[i], grid[i + 1]))
    if not candidates:
        raise ReductionError(f"no resting equilibrium within {search} of the declared rest {V0}")
    v_rest = min(candidates, key=lambda v: abs(v - V0))
    gates = {k: float(v) for k, v in model.steady_gates(v_rest).items()}
    residual = float(abs(_rest_residual(model, v_rest)))
    dyn = FullDynamics(model, v_rest, gates)
    return RestingState(v_rest, gates, residual, _eigenvalues(dyn))


def _eigenvalues(dyn: FullDynamics) -> tuple[complex, ...]:
    x0 = dyn.rest_state()
    n = x0.size
    jac = np.empty((n, n))
    for j in range(n):
        h = 1e-6 * max(1.0, abs(x0[j]))
        up, dn = x0.copy(), x0.copy()
        up[j] += h
        dn[j] -= h
        jac[:, j] = (dyn.derivatives(up) - dyn.derivatives(dn)) / (2 * h)
    return tuple(complex(ev) for ev in np.linalg.eigvals(jac))


def full_dynamics(model: IonicModel, rest: RestingState | None = None) -> FullDynamics:
    rest = rest or resting_state(model)
    return FullDynamics(model, rest.v_rest, rest.gates)


class ReducedCurrent(ExcitableCurrent):
    """Scalar current of a gate-frozen model, in recentred voltage ``v = V - V_rest``.

    Derivatives are five-point central differences with steps scaled to
    the model's voltage window.
    """

    def __init__(self, model: IonicModel, rest: RestingState):
        self.model = model
        self.rest = rest
        self.v_rest = rest.v_rest
        lo, hi = model.window
        self.window = (lo - rest.v_rest, hi - rest.v_rest)
        width = self.window[1] - self.window[0]
        self._h1 = 1e-4 * width
        self._h2 = 1e-3 * width
        self._instant = [g for g in model.gates if g.reduction_rule is ReductionRule.INSTANTANEOUS]
        self._frozen = {g.name: rest.gates[g.name] for g in model.gates if g.reduction_rule is ReductionRule.FROZEN_AT_REST}
        self._offset = 0.0
        self._offset = float(self._raw(0.0))

    def _raw(self, v):
        V = np.asarray(v, dtype=float) + self.v_rest
        values = dict(self._frozen)
        for gt in self._instant:
            values[gt.name] = gt.steady_state(V)
        return -self.model.ionic_current(V, values) / self.model.capacitance - self._offset

    def f(self, v):
        out = self._raw(v)
        return float(out) if np.ndim(out) == 0 else out

    def df(self, v):
        h = self._h1
        out = (-self._raw(v + 2 * h) + 8 * self._raw(v + h) - 8 * self._raw(v - h) + self._raw(v - 2 * h)) / (12 * h)
        return float(out) if np.ndim(out) == 0 else out

    def d2f(self, v):
        h = self._h2
        out = (
            -self._raw(v + 2 * h) + 16 * self._raw(v + h) - 30 * self._raw(v) + 16 * self._raw(v - h) - self._raw(v - 2 * h)
        ) / (12 * h * h)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def leak_conductance(self) -> float:
        """Linearised leak at rest, ``|F'(0)|``."""
        return abs(self.df(0.0))

    @cached_property
    def landmarks(self) -> Landmarks:
        return extract_landmarks(self)

    def __repr__(self) -> str:
        return f"ReducedCurrent({self.model.name!r}, v_rest={self.v_rest!r})"


def reduce_to_1d(model: IonicModel, rest: RestingState | None = None) -> ReducedCurrent:
    """Replace instantaneous gates by their steady states and freeze the rest.

    Every gate must carry the rule ``instantaneous`` or ``frozen``.
    """
    dynamic = [g.name for g in model.gates if g.reduction_rule is ReductionRule.DYNAMIC]
    if dynamic:
        raise ReductionError(f"gates {dynamic} are marked dynamic; a scalar reduction needs every gate instantaneous or frozen")
    return ReducedCurrent(model, rest or resting_state(model))


def _sign_changes(fun, lo, hi, n=SCAN_POINTS):
    grid = np.linspace(lo, hi, n)
    vals = np.asarray(fun(grid), dtype=float)
    idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    return [(grid[i], grid[i + 1]) for i in idx]


def extract_landmarks(red: ExcitableCurrent) -> Landmarks:
    """Numeric landmarks of a reduced current.

    Zeros give the threshold and peak; extrema of ``F`` give ``v_min`` and
    ``v_max``; the inflection is the zero of ``F''`` between them; ``v_E``
    solves ``F(v) = F'(v) v`` above the inflection.
    """
    lo, hi = getattr(red, "window", (-0.5, 1.5))
    if not red.df(0.0) < 0.0:
        raise NotExcitableError("stable rest", "F'(0) must be negative")
    start = 1e-6 * (hi - lo)
    zeros = [_root(red.f, a, b) for a, b in _sign_changes(red.f, start, hi)]
    if not zeros:
        raise NotExcitableError("threshold", "F has no zero above rest")
    if len(zeros) == 1:
        raise NotExcitableError("peak voltage v_F", "F has a single zero above rest")
    if len(zeros) > 2:
        raise NotExcitableError("unique threshold/peak pair", f"F has {len(zeros) + 1} zeros")
    v_T, v_F = zeros
    v_min = _root(red.df, start, v_T)
    ext = _sign_changes(red.df, v_T, v_F)
    if len(ext) != 1:
        raise NotExcitableError("unique local maximum v_max", f"{len(ext)} extrema between threshold and peak")
    v_max = _root(red.df, *ext[0])
    d2 = getattr(red, "d2f")
    infl = _sign_changes(d2, v_min, v_max)
    if not infl:
        raise NotExcitableError("inflection point v_i")
    v_i = _root(d2, *infl[0])
    v_E = _root(lambda v: red.f(v) - red.df(v) * v, v_i, v_F)
    return Landmarks(v_min=v_min, v_T=v_T, v_i=v_i, v_E=v_E, v_max=v_max, v_F=v_F)


def time_constant_report(model: IonicModel, rest: RestingState | None = None) -> list[dict]:
    """Gate time constants at rest next to the membrane time constant.

    Offered as justification for each gate's declared reduction rule: gates
    much faster than the membrane suit ``instantaneous``, much slower ones
    ``frozen``.
    """
    rest = rest or resting_state(model)
    tau_m = FullDynamics(model, rest.v_rest, rest.gates).membrane_tau
    rows = []
    for gt in model.gates:
        tau = float(gt.time_constant(rest.v_rest))
        rows.append(
            {
                "gate": gt.name,
                "tau_at_rest": tau,
                "membrane_tau": tau_m,
                "ratio": tau / tau_m if math.isfinite(tau_m) else math.nan,
                "declared_rule": gt.reduction_rule.value,
                "suggested_rule": "instantaneous" if tau < tau_m else "frozen",
            }
        )
    return rows

