import io
import math

import numpy as np
import pytest

from gjprop.regions import Coupling, classify, g_star, k_exc, k_max, v_infinity
from gjprop.network import (
    ChainConfig,
    ClampProtocol,
    EventRelease,
    TrajectoryTooShort,
    classify_trajectory,
    integrate_batch,
    read_trajectory_csv,
    simulate_chain,
    simulate_single,
    write_trajectory_csv,
)
from gjprop.treemap import iterate_phi


def test_protocol_values():
    p = ClampProtocol.pulse(1.0, 30.0)
    assert p.value_at(0.0) == 1.0 and p.value_at(29.99) == 1.0
    assert p.value_at(30.0) == 0.0 and p.value_at(1e6) == 0.0
    with pytest.raises(ValueError):
        ClampProtocol(())
    with pytest.raises(ValueError):
        ClampProtocol(((0.0, 1.0),))


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(0, 0.1, 1.0)
    with pytest.raises(ValueError):
        ChainConfig(3, 0.0, 1.0)


def test_terminal_matches_v_infinity(cell):
    for g, k in [(0.03, 2.0), (0.07, 2.0), (0.2, 0.5), (0.01, 1.0)]:
        tr = simulate_single(cell, g, k, ClampProtocol.constant(1.0), dt=0.1, t_end=2000, stride=100)
        assert tr.cell(1)[-1] == pytest.approx(v_infinity(cell, Coupling(g, k)), abs=1e-6)
        assert tr.cell(0)[-1] == 1.0


def test_rk4_fourth_order(cell):
    def run(dt):
        return simulate_single(cell, 0.03, 2.0, ClampProtocol.constant(1.0), dt=dt, t_end=40, stride=int(round(2 / dt)))

    ref = run(0.0125).cell(1)
    e1 = np.abs(run(0.4).cell(1) - ref).max()
    e2 = np.abs(run(0.2).cell(1) - ref).max()
    assert 12 <= e1 / e2 <= 20


def test_release_metadata(cell):
    rel = EventRelease(threshold=cell.landmarks.v_E)
    tr = simulate_single(cell, 0.07, 2.0, ClampProtocol.constant(1.0, rel), dt=0.05, t_end=100)
    assert tr.metadata["release_triggered"] is True
    assert 0 < tr.metadata["release_time"] < 100
    assert abs(tr.cell(1)[-1]) < 1e-3
    never = simulate_single(cell, 0.001, 2.0, ClampProtocol.constant(1.0, rel), dt=0.05, t_end=20)
    assert never.metadata["release_triggered"] is False
    assert never.metadata["release_time"] is None


def test_metadata_and_determinism(cell):
    p = ClampProtocol.pulse(1.0, 10.0)
    a = simulate_single(cell, 0.03, 2.0, p, dt=0.05, t_end=20)
    b = simulate_single(cell, 0.03, 2.0, p, dt=0.05, t_end=20)
    assert np.array_equal(a.voltages, b.voltages)
    assert a.metadata["config_hash"] == b.metadata["config_hash"]
    assert a.metadata["integrator"] == "rk4" and a.metadata["dt"] == 0.05
    c = simulate_single(cell, 0.03, 2.1, p, dt=0.05, t_end=20)
    assert c.metadata["config_hash"] != a.metadata["config_hash"]


def test_batch_matches_single_runs(cell):
    g = np.array([0.01, 0.03, 0.07])
    k = np.array([2.0, 2.0, 2.0])
    res = integrate_batch(cell, g, k, 1, ClampProtocol.pulse(1.0, 30.0), 0.05, 60.0, stride=None)
    for i in range(3):
        one = simulate_single(cell, g[i], k[i], ClampProtocol.pulse(1.0, 30.0), dt=0.05, t_end=60.0)
        assert res.final[i, 1, 0] == one.cell(1)[-1]
        assert res.vmax[i, 1] == one.cell(1).max()


def test_csv_round_trip(cell):
    tr = simulate_single(cell, 0.03, 2.0, ClampProtocol.pulse(1.0, 5.0), dt=0.05, t_end=10)
    buf = io.StringIO()
    write_trajectory_csv(tr, buf, "demo")
    text = buf.getvalue()
    assert text.startswith("# demo\nt,v0,v1\n")
    back = read_trajectory_csv(io.StringIO(text))
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.voltages, tr.voltages)


def test_classify_trajectory_too_short(cell):
    tr = simulate_single(cell, 0.03, 2.0, ClampProtocol.pulse(1.0, 30.0), dt=0.05, t_end=40)
    with pytest.raises(TrajectoryTooShort):
        classify_trajectory(tr, 30.0, cell.landmarks)


def test_trajectory_class_agrees_with_analysis(cell):
    # g below g_star, k clear of both boundaries; passage past a nearly
    # tangent line is slow, so the margin scales with the boundary
    gs = g_star(cell, 1.0)
    checked = 0
    for g in np.linspace(0.004, gs, 7):
        for k in np.linspace(0.0, 6.0, 7):
            bounds = [k_exc(cell, g)]
            try:
                bounds.append(k_max(cell, 1.0, g))
            except ValueError:
                pass
            if any(abs(k - b) < 0.1 * max(1.0, b) for b in bounds):
                continue
            tr = simulate_single(cell, g, k, ClampProtocol.pulse(1.0, 150.0), dt=0.1, t_end=300, stride=20)
            got = classify_trajectory(tr, 150.0, cell.landmarks)
            assert got is classify(cell, Coupling(g, k)), (g, k)
            checked += 1
    assert checked >= 30


def test_feedforward_chain_follows_map(cell):
    # each cell of a feedforward chain sees rest downstream, as the map assumes
    for g, k in [(0.07, 2.0), (0.07, 3.0), (0.03, 1.0)]:
        trace = iterate_phi(cell, g, k)
        n = 10
        tr = simulate_chain(cell, ChainConfig(n, g, k, feedforward=True), ClampProtocol.constant(1.0), dt=0.1, t_end=600, stride=6000)
        final = tr.voltages[-1]
        for j in range(1, n + 1):
            ref = trace.iterates[min(j, len(trace.iterates) - 1)]
            assert final[j] == pytest.approx(ref, abs=0.05)


def test_bidirectional_chain_differs_from_map(cell):
    # with live downstream neighbours the penultimate cell rides higher than v_+
    tr = simulate_chain(cell, ChainConfig(10, 0.07, 2.0), ClampProtocol.constant(1.0), dt=0.1, t_end=600, stride=6000)
    assert tr.voltages[-1][9] > iterate_phi(cell, 0.07, 2.0).limit + 0.05


def test_single_is_chain_of_one(cell):
    p = ClampProtocol.pulse(1.0, 10.0)
    a = simulate_single(cell, 0.03, 2.0, p, dt=0.05, t_end=20)
    b = simulate_chain(cell, ChainConfig(1, 0.03, 2.0), p, dt=0.05, t_end=20)
    assert np.array_equal(a.voltages, b.voltages)


def test_free_upstream_after_release(cell):
    rel = EventRelease(threshold=cell.landmarks.v_E, free_upstream=True)
    tr = simulate_single(cell, 0.03, 2.0, ClampProtocol.constant(1.0, rel), dt=0.05, t_end=50)
    t_rel = tr.metadata["release_time"]
    after = tr.times > t_rel + 1.0
    # the freed upstream cell evolves instead of sitting at the clamp value
    assert not np.allclose(tr.cell(0)[after], 0.0)
    assert math.isfinite(tr.cell(0)[-1])
