"""Conductance-based cell definitions loaded from JSON model files.

A model file looks like::

    {
      "name": "hh_squid",
      "capacitance": 1.0,
      "resting_potential": -65.0,
      "currents": [
        {"name": "na", "gbar": 120.0, "reversal": 50.0,
         "gates": [{"gate": "m", "exponent": 3}, {"gate": "h", "exponent": 1}]},
        {"name": "leak", "gbar": 0.3, "reversal": -54.387, "gates": []}
      ],
      "gates": [
        {"name": "m", "reduction_rule": "instantaneous",
         "kinetics": {"alpha": {"form": "linexp", "rate": 0.1, "vhalf": -40, "scale": 10},
                      "beta": {"form": "exp", "rate": 4.0, "vhalf": -65, "scale": -18}}}
      ]
    }

Gate kinetics are either ``alpha``/``beta`` rates or ``inf``/``tau``
functions.  Each function is one of the forms in :data:`FUNCTION_FORMS`.
A current may instead be ``{"type": "polynomial", "coefficients": [...]}``,
giving ``I(V) = sum c_n V^n`` directly.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "ModelFileError",
    "ReductionRule",
    "VoltageFunction",
    "GateSpec",
    "Current",
    "IonicModel",
    "FullDynamics",
    "FUNCTION_FORMS",
    "load_model",
    "parse_model",
    "bundled_model",
    "bundled_model_names",
    "cubic_pseudo_model",
]


class ModelFileError(ValueError):
    """A model file could not be parsed; ``where`` locates the problem."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class ReductionRule(str, enum.Enum):
    INSTANTANEOUS = "instantaneous"
    FROZEN_AT_REST = "frozen"
    DYNAMIC = "dynamic"


# --- voltage functions -------------------------------------------------------


def _exprel(x):
    """``x / (1 - exp(-x))`` with the removable singularity at 0 filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5 * x, safe / -np.expm1(-safe))


@dataclass(frozen=True)
class VoltageFunction:
    """A rate, steady state or time constant as a function of voltage (native units)."""

    form: str
    params: tuple = ()
    table: PchipInterpolator | None = field(default=None, compare=False)

    def __call__(self, V):
        V = np.asarray(V, dtype=float)
        p = self.params
        if self.form == "constant":
            return np.full_like(V, p[0])
        if self.form == "exp":
            rate, vhalf, scale = p
            return rate * np.exp((V - vhalf) / scale)
        if self.form == "linexp":
            rate, vhalf, scale = p
            return rate * scale * _exprel((V - vhalf) / scale)
        if self.form == "sigmoid":
            rate, vhalf, scale = p
            return rate / (1.0 + np.exp(-(V - vhalf) / scale))
        if self.form == "standard":
            return _standard_rate(V, *p)
        if self.form == "table":
            lo, hi = self.table.x[0], self.table.x[-1]
            return self.table(np.clip(V, lo, hi))
        raise AssertionError(self.form)


def _standard_rate(V, A, B, C, H, D, F):
    # (A + B V) / (C + H exp((V + D) / F)); the 0/0 points are filled by
    # averaging the neighbours, which is exact to O(eps^2) for this form
    def raw(x):
        return (A + B * x) / (C + H * np.exp((x + D) / F))

    den = C + H * np.exp((V + D) / F)
    bad = np.abs(den) < 1e-9 * max(abs(C), abs(H), 1.0)
    if not np.any(bad):
        return raw(V)
    eps = 1e-6 * max(abs(F), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = raw(V)
    return np.where(bad, 0.5 * (raw(V + eps) + raw(V - eps)), out)


FUNCTION_FORMS = {
    "constant": ("value",),
    "exp": ("rate", "vhalf", "scale"),
    "linexp": ("rate", "vhalf", "scale"),
    "sigmoid": ("rate", "vhalf", "scale"),
    "standard": ("coefficients",),
    "table": ("v", "values"),
}


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ModelFileError(f"expected a finite number, got {value!r}", where)
    return float(value)


def _parse_function(spec, where) -> VoltageFunction:
    if not isinstance(spec, dict):
        raise ModelFileError("expected an object", where)
    form = spec.get("form")
    if form not in FUNCTION_FORMS:
        raise ModelFileError(f"unknown form {form!r}; expected one of {sorted(FUNCTION_FORMS)}", f"{where}.form")
    for key in FUNCTION_FORMS[form]:
        if key not in spec:
            raise ModelFileError(f"missing field {key!r}", where)
    if form == "constant":
        return VoltageFunction(form, (_number(spec["value"], f"{where}.value"),))
    if form == "standard":
        coeffs = spec["coefficients"]
        if not isinstance(coeffs, list) or len(coeffs) != 6:
            raise ModelFileError("expected six coefficients [A, B, C, H, D, F]", f"{where}.coefficients")
        params = tuple(_number(c, f"{where}.coefficients[{i}]") for i, c in enumerate(coeffs))
        if params[5] == 0.0:
            raise ModelFileError("F must be nonzero", f"{where}.coefficients[5]")
        return VoltageFunction(form, params)
    if form == "table":
        v = [_number(x, f"{where}.v[{i}]") for i, x in enumerate(spec["v"])]
        y = [_number(x, f"{where}.values[{i}]") for i, x in enumerate(spec["values"])]
        if len(v) != len(y) or len(v) < 2:
            raise ModelFileError("v and values need equal length >= 2", where)
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ModelFileError("v must be strictly increasing", f"{where}.v")
        return VoltageFunction(form, (), PchipInterpolator(v, y, extrapolate=False))
    rate = _number(spec["rate"], f"{where}.rate")
    vhalf = _number(spec["vhalf"], f"{where}.vhalf")
    scale = _number(spec["scale"], f"{where}.scale")
    if scale == 0.0:
        raise ModelFileError("scale must be nonzero", f"{where}.scale")
    return VoltageFunction(form, (rate, vhalf, scale))


# --- gates and currents -------------------------------------------------------


@dataclass(frozen=True)
class GateSpec:
    name: str
    reduction_rule: ReductionRule
    alpha: VoltageFunction | None = None
    beta: VoltageFunction | None = None
    inf_fn: VoltageFunction | None = None
    tau_fn: VoltageFunction | None = None

    def steady_state(self, V):
        if self.alpha is not None:
            a, b = self.alpha(V), self.beta(V)
            return a / (a + b)
        return self.inf_fn(V)

    def time_constant(self, V):
        if self.alpha is not None:
            return 1.0 / (self.alpha(V) + self.beta(V))
        return self.tau_fn(V)


@dataclass(frozen=True)
class Current:
    name: str
    gbar: float = 0.0
    reversal: float = 0.0
    gates: tuple[tuple[str, int], ...] = ()
    polynomial: tuple[float, ...] | None = None

    def evaluate(self, V, gate_values: dict):
        if self.polynomial is not None:
            return np.polynomial.polynomial.polyval(V, self.polynomial)
        conductance = self.gbar
        for gate, power in self.gates:
            conductance = conductance * gate_values[gate] ** power
        return conductance * (V - self.reversal)


@dataclass(frozen=True)
class IonicModel:
    """A single-compartment conductance-based cell.

    Voltages are in the model's native units (usually mV, time in ms);
    ``ionic_current`` is the outward current density, so
    ``C dV/dt = -ionic_current``.
    """

    name: str
    capacitance: float
    resting_potential: float
    currents: tuple[Current, ...]
    gates: tuple[GateSpec, ...]
    window: tuple[float, float]
    description: str = ""

    @property
    def gate_names(self) -> tuple[str, ...]:
        return tuple(gt.name for gt in self.gates)

    def gate(self, name: str) -> GateSpec:
        for gt in self.gates:
            if gt.name == name:
                return gt
        raise KeyError(name)

    def ionic_current(self, V, gate_values: dict):
        total = np.zeros_like(np.asarray(V, dtype=float))
        for cur in self.currents:
            total = total + cur.evaluate(V, gate_values)
        return total

    def steady_gates(self, V) -> dict:
        return {gt.name: gt.steady_state(V) for gt in self.gates}


class FullDynamics:
    """All gates dynamic; state is ``[v, x_1, ..., x_n]`` with ``v`` recentred
    so that the resting potential is 0."""

    def __init__(self, model: IonicModel, v_rest: float, rest_gates: dict):
        self.model = model
        self.v_rest = float(v_rest)
        self.rest_gates = dict(rest_gates)
        self.n_vars = 1 + len(model.gates)
        self.membrane_tau = _membrane_tau(model, v_rest, rest_gates)

    def rest_state(self) -> np.ndarray:
        return np.array([0.0] + [float(self.rest_gates[n]) for n in self.model.gate_names])

    def derivatives(self, state: np.ndarray) -> np.ndarray:
        V = state[..., 0] + self.v_rest
        values = {gt.name: state[..., i + 1] for i, gt in enumerate(self.model.gates)}
        out = np.empty_like(state)
        out[..., 0] = -self.model.ionic_current(V, values) / self.model.capacitance
        for i, gt in enumerate(self.model.gates):
            x = state[..., i + 1]
            if gt.alpha is not None:
                a, b = gt.alpha(V), gt.beta(V)
                out[..., i + 1] = a * (1.0 - x) - b * x
            else:
                out[..., i + 1] = (gt.inf_fn(V) - x) / gt.tau_fn(V)
        return out


def _membrane_tau(model: IonicModel, V, gates) -> float:
    # chord conductance of all currents at rest, per unit capacitance
    h = 1e-6 * max(1.0, abs(V))
    slope = (model.ionic_current(V + h, gates) - model.ionic_current(V - h, gates)) / (2 * h)
    slope = float(slope) / model.capacitance
    return 1.0 / slope if slope > 0 else math.inf


# --- parsing -----------------------------------------------------------------


def _parse_gate(spec, where) -> GateSpec:
    if not isinstance(spec, dict):
        raise ModelFileError("expected an object", where)
    name = spec.get("name")
    if not isinstance(name, str) or not name:
        raise ModelFileError("gate needs a non-empty name", f"{where}.name")
    rule = spec.get("reduction_rule", "dynamic")
    try:
        rule = ReductionRule(rule)
    except ValueError:
        raise ModelFileError(
            f"unknown reduction_rule {rule!r}; expected one of {[r.value for r in ReductionRule]}",
            f"{where}.reduction_rule",
        ) from None
    kin = spec.get("kinetics")
    if not isinstance(kin, dict):
        raise ModelFileError("missing kinetics object", f"{where}.kinetics")
    has_rates = "alpha" in kin or "beta" in kin
    has_inf = "inf" in kin or "tau" in kin
    if has_rates == has_inf:
        raise ModelFileError("give exactly one of alpha/beta or inf/tau", f"{where}.kinetics")
    kw = f"{where}.kinetics"
    if has_rates:
        if "alpha" not in kin or "beta" not in kin:
            raise ModelFileError("alpha and beta must both be given", kw)
        return GateSpec(
            name, rule, alpha=_parse_function(kin["alpha"], f"{kw}.alpha"), beta=_parse_function(kin["beta"], f"{kw}.beta")
        )
    if "inf" not in kin or "tau" not in kin:
        raise ModelFileError("inf and tau must both be given", kw)
    return GateSpec(
        name, rule, inf_fn=_parse_function(kin["inf"], f"{kw}.inf"), tau_fn=_parse_function(kin["tau"], f"{kw}.tau")
    )


def _parse_current(spec, where, gate_names) -> Current:
    if not isinstance(spec, dict):
        raise ModelFileError("expected an object", where)
    name = spec.get("name")
    if not isinstance(name, str) or not name:
        raise ModelFileError("current needs a non-empty name", f"{where}.name")
    kind = spec.get("type", "ohmic")
    if kind == "polynomial":
        coeffs = spec.get("coefficients")
        if not isinstance(coeffs, list) or not coeffs:
            raise ModelFileError("polynomial current needs a coefficient list", f"{where}.coefficients")
        return Current(name, polynomial=tuple(_number(c, f"{where}.coefficients[{i}]") for i, c in enumerate(coeffs)))
    if kind != "ohmic":
        raise ModelFileError(f"unknown current type {kind!r}", f"{where}.type")
    for key in ("gbar", "reversal"):
        if key not in spec:
            raise ModelFileError(f"missing field {key!r}", where)
    gbar = _number(spec["gbar"], f"{where}.gbar")
    if gbar < 0:
        raise ModelFileError("gbar must be nonnegative", f"{where}.gbar")
    refs = []
    for j, ref in enumerate(spec.get("gates", [])):
        rw = f"{where}.gates[{j}]"
        if not isinstance(ref, dict) or ref.get("gate") not in gate_names:
            raise ModelFileError(f"reference to unknown gate {ref.get('gate') if isinstance(ref, dict) else ref!r}", rw)
        exp = ref.get("exponent", 1)
        if isinstance(exp, bool) or not isinstance(exp, int) or exp < 1:
            raise ModelFileError("exponent must be an integer >= 1", f"{rw}.exponent")
        refs.append((ref["gate"], exp))
    return Current(name, gbar, _number(spec["reversal"], f"{where}.reversal"), tuple(refs))


def parse_model(doc) -> IonicModel:
    if not isinstance(doc, dict):
        raise ModelFileError("model file must contain a JSON object")
    for key in ("capacitance", "resting_potential", "currents"):
        if key not in doc:
            raise ModelFileError(f"missing top-level field {key!r}")
    cap = _number(doc["capacitance"], "capacitance")
    if cap <= 0:
        raise ModelFileError("capacitance must be positive", "capacitance")
    rest = _number(doc["resting_potential"], "resting_potential")
    gates_doc = doc.get("gates", [])
    if not isinstance(gates_doc, list):
        raise ModelFileError("expected a list", "gates")
    gates = tuple(_parse_gate(g, f"gates[{i}]") for i, g in enumerate(gates_doc))
    names = [g.name for g in gates]
    if len(set(names)) != len(names):
        raise ModelFileError("gate names must be unique", "gates")
    if not isinstance(doc["currents"], list) or not doc["currents"]:
        raise ModelFileError("expected a non-empty list", "currents")
    currents = tuple(_parse_current(c, f"currents[{i}]", set(names)) for i, c in enumerate(doc["currents"]))
    if "window" in doc:
        w = doc["window"]
        if not isinstance(w, list) or len(w) != 2:
            raise ModelFileError("expected [low, high]", "window")
        window = (_number(w[0], "window[0]"), _number(w[1], "window[1]"))
        if not window[0] < rest < window[1]:
            raise ModelFileError("window must contain the resting potential", "window")
    else:
        reversals = [c.reversal for c in currents if c.polynomial is None]
        if not reversals:
            raise ModelFileError("models without reversal potentials must declare a voltage window", "window")
        window = (min(reversals + [rest]) - 10.0, max(reversals) + 10.0)
    return IonicModel(
        name=str(doc.get("name", "")),
        capacitance=cap,
        resting_potential=rest,
        currents=currents,
        gates=gates,
        window=window,
        description=str(doc.get("description", "")),
    )


def load_model(path) -> IonicModel:
    """Load and validate a model file, reporting JSON errors by line and column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelFileError(exc.strerror or str(exc), str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    try:
        return parse_model(doc)
    except ModelFileError as exc:
        raise ModelFileError(str(exc), str(path)) from None


def bundled_model_names() -> list[str]:
    files = resources.files("gjprop.ionic").joinpath("models")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def bundled_model(name: str) -> IonicModel:
    res = resources.files("gjprop.ionic").joinpath("models", f"{name}.json")
    if not res.is_file():
        raise ModelFileError(f"no bundled model named {name!r}; have {bundled_model_names()}")
    with resources.as_file(res) as path:
        return load_model(path)


def cubic_pseudo_model(v_T: float) -> IonicModel:
    """The cubic cell written as a one-current model with rest at 0."""
    doc = {
        "name": f"cubic_vT{v_T:g}",
        "capacitance": 1.0,
        "resting_potential": 0.0,
        "window": [-0.5, 1.5],
        # I(v) = -F(v) = v_T v - (1 + v_T) v^2 + v^3
        "currents": [{"name": "cubic", "type": "polynomial", "coefficients": [0.0, v_T, -(1.0 + v_T), 1.0]}],
        "gates": [],
    }
    return parse_model(doc)
