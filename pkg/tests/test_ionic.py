import json
import math

import numpy as np
import pytest

from gjprop.cubic import CubicCell
from gjprop.ionic import (
    ModelFileError,
    NotExcitableError,
    ReductionError,
    ReductionRule,
    bundled_model,
    bundled_model_names,
    cubic_pseudo_model,
    extract_landmarks,
    full_dynamics,
    load_model,
    parse_model,
    reduce_to_1d,
    resting_state,
    time_constant_report,
)
from gjprop.ionic.model import VoltageFunction, _parse_function
from gjprop.ionic.sweep import SWEEP_COLUMNS, boundary_overlays, condition_sweep


@pytest.fixture(scope="module")
def hh():
    return bundled_model("hh_squid")


@pytest.fixture(scope="module")
def hh_reduced(hh):
    return reduce_to_1d(hh)


def _doc(**over):
    doc = {
        "name": "toy",
        "capacitance": 1.0,
        "resting_potential": -65.0,
        "currents": [{"name": "leak", "gbar": 0.3, "reversal": -65.0, "gates": []}],
        "gates": [],
    }
    doc.update(over)
    return doc


# --- parsing -----------------------------------------------------------------


def test_bundled_models_listed():
    assert {"hh_squid", "cubic"} <= set(bundled_model_names())
    with pytest.raises(ModelFileError):
        bundled_model("nope")


def test_hh_parses(hh):
    assert hh.gate_names == ("m", "h", "n")
    assert hh.gate("m").reduction_rule is ReductionRule.INSTANTANEOUS
    assert hh.gate("h").reduction_rule is ReductionRule.FROZEN_AT_REST
    assert hh.window == (-87.0, 60.0)


def test_json_syntax_error_has_line_and_column(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "name": "x",\n  "capacitance": 1,\n}\n')
    with pytest.raises(ModelFileError) as info:
        load_model(p)
    assert info.value.where == f"{p}:4:1"


def test_missing_file(tmp_path):
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "absent.json")


@pytest.mark.parametrize(
    "over,where",
    [
        ({"capacitance": -1.0}, "capacitance"),
        ({"capacitance": None}, "capacitance"),
        ({"currents": []}, "currents"),
        ({"currents": [{"name": "x", "gbar": -1, "reversal": 0}]}, "currents[0].gbar"),
        ({"currents": [{"name": "x", "gbar": 1, "reversal": 0, "gates": [{"gate": "q"}]}]}, "currents[0].gates[0]"),
        ({"currents": [{"name": "x", "type": "polynomial", "coefficients": [1.0]}]}, "window"),
        ({"window": [-50.0, 0.0]}, "window"),
        (
            {"gates": [{"name": "m", "reduction_rule": "sometimes", "kinetics": {}}]},
            "gates[0].reduction_rule",
        ),
        ({"gates": [{"name": "m", "kinetics": {"alpha": {"form": "exp", "rate": 1, "vhalf": 0, "scale": 1}}}]}, "gates[0].kinetics"),
        (
            {"gates": [{"name": "m", "kinetics": {"inf": {"form": "wobble"}, "tau": {"form": "constant", "value": 1}}}]},
            "gates[0].kinetics.inf.form",
        ),
        (
            {"gates": [{"name": "m", "kinetics": {"inf": {"form": "sigmoid", "rate": 1, "vhalf": 0, "scale": 0}, "tau": {"form": "constant", "value": 1}}}]},
            "gates[0].kinetics.inf.scale",
        ),
    ],
)
def test_field_errors_name_the_field(over, where):
    with pytest.raises(ModelFileError) as info:
        parse_model(_doc(**over))
    assert info.value.where == where


def test_file_field_error_carries_path(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(_doc(capacitance=0)))
    with pytest.raises(ModelFileError, match="capacitance"):
        load_model(p)


def test_templates_are_rejected():
    from importlib import resources

    root = resources.files("gjprop.ionic").joinpath("templates")
    names = [p.name for p in root.iterdir() if p.name.endswith(".json")]
    assert len(names) == 2
    for name in names:
        with resources.as_file(root.joinpath(name)) as path:
            with pytest.raises(ModelFileError):
                load_model(path)


# --- voltage functions ---------------------------------------------------------


def test_linexp_removable_singularity():
    f = _parse_function({"form": "linexp", "rate": 0.1, "vhalf": -40.0, "scale": 10.0}, "f")
    V = np.array([-40.0 - 1e-6, -40.0, -40.0 + 1e-6])
    out = f(V)
    assert np.all(np.isfinite(out))
    assert out[1] == pytest.approx(1.0, abs=1e-12)
    assert abs(out[0] - out[2]) < 1e-6


def test_standard_form_matches_linexp_and_fills_pole():
    # 0.1 (V + 40) / (1 - exp(-(V + 40) / 10)) as [A, B, C, H, D, F]
    std = _parse_function({"form": "standard", "coefficients": [4.0, 0.1, 1.0, -1.0, 40.0, -10.0]}, "f")
    lin = _parse_function({"form": "linexp", "rate": 0.1, "vhalf": -40.0, "scale": 10.0}, "f")
    V = np.linspace(-80, 20, 101)
    np.testing.assert_allclose(std(V), lin(V), rtol=1e-9)
    assert std(np.array(-40.0)) == pytest.approx(1.0, abs=1e-9)


def test_table_form_is_monotone_pchip():
    f = _parse_function({"form": "table", "v": [-80, -40, 0, 40], "values": [0.0, 0.1, 0.9, 1.0]}, "f")
    V = np.linspace(-100, 60, 200)
    y = f(V)
    assert np.all(np.diff(y) >= -1e-15)
    assert float(f(np.array(-100.0))) == pytest.approx(0.0, abs=1e-15)
    assert float(f(np.array(60.0))) == pytest.approx(1.0, abs=1e-15)


def test_constant_form():
    f = VoltageFunction("constant", (2.5,))
    assert np.all(f(np.zeros(3)) == 2.5)


# --- rest, reduction, landmarks ---------------------------------------------------


def test_hh_rest_is_stable(hh):
    rest = resting_state(hh)
    assert rest.v_rest == pytest.approx(-65.0, abs=0.05)
    assert rest.residual < 1e-10
    assert rest.stable


def test_degenerate_model_is_rejected():
    doc = _doc(currents=[{"name": "none", "gbar": 0.0, "reversal": 0.0, "gates": []}])
    with pytest.raises(ReductionError, match="degenerate"):
        resting_state(parse_model(doc))


def test_dynamic_gates_block_reduction():
    doc = _doc(
        gates=[{"name": "q", "kinetics": {"inf": {"form": "constant", "value": 0.5}, "tau": {"form": "constant", "value": 1}}}],
        currents=[{"name": "x", "gbar": 0.3, "reversal": -65.0, "gates": [{"gate": "q"}]}],
    )
    with pytest.raises(ReductionError, match="dynamic"):
        reduce_to_1d(parse_model(doc))


def test_leak_only_model_is_not_excitable():
    red = reduce_to_1d(parse_model(_doc()))
    with pytest.raises(NotExcitableError) as info:
        extract_landmarks(red)
    assert info.value.landmark == "threshold"


def test_hh_landmarks(hh_reduced):
    lm = hh_reduced.landmarks
    assert lm.ordered()
    assert lm.v_T == pytest.approx(2.6145, abs=1e-3)
    assert lm.v_F == pytest.approx(113.91, abs=1e-2)
    assert hh_reduced.f(0.0) == 0.0
    assert hh_reduced.df(0.0) < 0
    for v in (lm.v_T, lm.v_F):
        assert abs(hh_reduced.f(v)) < 1e-9
    assert abs(hh_reduced.df(lm.v_min)) < 1e-8 and abs(hh_reduced.df(lm.v_max)) < 1e-8
    assert hh_reduced.f(lm.v_E) == pytest.approx(hh_reduced.df(lm.v_E) * lm.v_E, rel=1e-8)


def test_hh_time_constants_support_declared_rules(hh):
    for row in time_constant_report(hh):
        assert row["suggested_rule"] == row["declared_rule"], row["gate"]


def test_full_dynamics_rest_is_equilibrium(hh):
    dyn = full_dynamics(hh)
    assert np.max(np.abs(dyn.derivatives(dyn.rest_state()))) < 1e-9


def test_cubic_pseudo_model_matches_closed_forms():
    for v_T in (0.1, 0.15, 0.3):
        red = reduce_to_1d(cubic_pseudo_model(v_T))
        got = red.landmarks.as_dict()
        ref = CubicCell(v_T).landmarks.as_dict()
        for name in ref:
            assert got[name] == pytest.approx(ref[name], abs=1e-9), name


def test_bundled_cubic_matches_cubic_cell():
    red = reduce_to_1d(bundled_model("cubic"))
    ref = CubicCell(0.15).landmarks.as_dict()
    for name, value in red.landmarks.as_dict().items():
        assert value == pytest.approx(ref[name], abs=1e-9)


# --- sweeps --------------------------------------------------------------------


def test_sweep_csv_layout(cell):
    import io

    res = condition_sweep(cell, [0.03, 0.07], [2.0], dt=0.05, t_end=150)
    buf = io.StringIO()
    res.write_csv(buf, "hdr", rule="sustained")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# hdr"
    assert lines[1].split(",") == list(SWEEP_COLUMNS) + ["k_max", "k_exc"]
    assert [ln.split(",")[6] for ln in lines[2:]] == ["Active", "SemiActive"]


def test_sweep_empty_grid(cell):
    res = condition_sweep(cell, [], [1.0])
    assert res.vmax1.shape == (0, 1)
    assert list(res.rows()) == []


def test_sweep_rejects_bad_modes(cell, hh):
    with pytest.raises(ValueError):
        condition_sweep(cell, [0.1], [1.0], mode="full")
    with pytest.raises(ValueError):
        condition_sweep(hh, [0.1], [1.0], network="ring")


def test_sweep_jobs_do_not_change_results(cell):
    g = np.linspace(0.01, 0.1, 5)
    k = np.linspace(0.0, 4.0, 3)
    a = condition_sweep(cell, g, k, dt=0.1, t_end=60, jobs=1)
    b = condition_sweep(cell, g, k, dt=0.1, t_end=60, jobs=2)
    assert np.array_equal(a.vmax1, b.vmax1) and np.array_equal(a.vmax2, b.vmax2)


def test_tree_overlays_use_adjusted_boundaries(cell):
    from gjprop.regions import adjust_boundary

    g = np.array([0.02, 0.1, 0.25])
    ov = boundary_overlays(cell, g, "tree")
    g_L = 0.15
    for i, x in enumerate(g):
        assert ov["k_prop_adj"][i] == pytest.approx(adjust_boundary(ov["k_prop"][i], x, g_L), abs=1e-12)
        assert ov["k_prop_adj"][i] >= ov["k_prop"][i]
    assert math.isnan(ov["k_exc_adj"][2])  # k_exc < 0 there


def test_hh_reduced_sweep_smoke(hh):
    res = condition_sweep(hh, [0.05, 1.0], [0.0, 5.0], mode="reduced", dt=0.002, t_end=20)
    assert (res.status == "ok").all()
    assert res.vmax1[0, 0] > res.landmarks.v_E


def test_hh_tree_firing_stays_inside_adjusted_k_prop(hh):
    # full dynamics on a 10-cell tree: every firing point lies under the
    # attenuation-adjusted propagation boundary (NaN means no propagation)
    g = np.geomspace(0.004, 30, 8)
    k = np.linspace(0.0, 12.0, 8)
    res = condition_sweep(hh, g, k, mode="full", network="tree", n_cells=10, dt=0.001, t_end=30)
    fires = res.vmax1 > res.landmarks.v_E
    bound = np.nan_to_num(res.overlays["k_prop_adj"], nan=-np.inf)
    assert fires.any()
    assert not (fires & (k[None, :] > bound[:, None])).any()
