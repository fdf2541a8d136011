import math
from dataclasses import replace

import pytest

from digesta.core import ModelParams, Profile, compute_derived
from digesta.errors import UnknownParameter, ValidationError
from digesta.integrator import IntegrationConfig
from digesta.scenarios import (
    FIBRE_DOSES,
    Composition,
    ScenarioConfig,
    apply_overrides,
    baseline_scenario,
    builtin_scenarios,
    default_workers,
    get_builtin,
    initial_state,
    run_scenario,
    sweep,
    time_to_water_ratio,
)

FAST = IntegrationConfig(dt=1e-2)
NAMES = [
    "solubilization-ratio",
    "intermediate-ratio",
    "insoluble-dose",
    "soluble-dose",
    "uniform-hydration",
    "ordered-hydration",
    "water-ratio",
]


def points(name):
    scenario = get_builtin(name)
    params = ModelParams()
    out = []
    for point in scenario.sweep.points:
        sc, pr = apply_overrides(scenario, params, point.set)
        out.append((point, sc, pr, initial_state(sc, pr)))
    return out


def total_mass(state, params):
    return compute_derived(state, params).M


def test_builtin_names():
    assert [s.name for s in builtin_scenarios()] == NAMES
    for name in NAMES:
        assert get_builtin(name).name == name
    with pytest.raises(ValidationError):
        get_builtin("no-such-scenario")


def test_baseline_bolus():
    params = ModelParams()
    state = initial_state(baseline_scenario(), params)
    assert state.dry_matter == pytest.approx(42.0)
    assert total_mass(state, params) == pytest.approx(120.0)
    assert state.A_s_dm == pytest.approx(0.42 * 42.0)
    assert state.A_ns == pytest.approx(0.42 * 42.0)
    assert state.A_nd == pytest.approx(0.16 * 42.0)


def test_solubilization_rows_leave_remainder_inert():
    rows = points("solubilization-ratio")
    assert [p.value for p, *_ in rows] == [0.0, 42.0, 85.0]
    first = rows[0][3]
    assert first.A_s_dm == 0.0
    assert first.A_ns == pytest.approx(0.85 * 42.0)
    assert first.A_nd == pytest.approx(0.15 * 42.0)


def test_intermediate_rows():
    rows = points("intermediate-ratio")
    assert [p.value for p, *_ in rows] == [0.0, 42.0, 85.0]
    expected_A_s = (85.0, 42.0, 0.0)
    for (point, _, _, state), a_s in zip(rows, expected_A_s):
        assert state.A_ns == 0.0
        assert state.B_int_dm == pytest.approx(point.value / 100 * 42.0)
        assert state.A_s_dm == pytest.approx(a_s / 100 * 42.0)


@pytest.mark.parametrize("name, pool", [("insoluble-dose", "F_insol_dm"), ("soluble-dose", "F_sol_dm")])
def test_fibre_doses_replace_inert_matter(name, pool):
    rows = points(name)
    assert [p.value for p, *_ in rows] == list(FIBRE_DOSES)
    grams = []
    for point, _, params, state in rows:
        assert total_mass(state, params) == pytest.approx(120.0)
        assert state.dry_matter == pytest.approx(42.0)
        assert state.A_nd + getattr(state, pool) == pytest.approx(0.16 * 42.0)
        grams.append(getattr(state, pool))
    nonzero = grams[1:]
    # roughly one to five grams of fibre in the 120 g bolus
    assert 0.5 < min(nonzero) < 1.5 and 4.5 < max(nonzero) < 6.0


def test_hydration_sweeps():
    uniform = [p.set for p in get_builtin("uniform-hydration").sweep.points]
    assert [(s["params.hydration.alpha"], s["params.hydration.gamma"]) for s in uniform] == [
        (k, k) for k in (1, 2, 3, 4)
    ]
    ordered = [p.set for p in get_builtin("ordered-hydration").sweep.points]
    triples = [tuple(s[f"params.hydration.{n}"] for n in ("alpha", "beta", "gamma")) for s in ordered]
    assert triples == [(1, 2, 3), (2, 2, 2), (3, 2, 1)]


def test_water_ratio_scenario():
    scenario = get_builtin("water-ratio")
    assert scenario.water.K_feed == 0.0 and scenario.water.K_sec == 0.0
    for point, sc, params, state in points("water-ratio"):
        M = total_mass(state, params)
        assert state.dry_matter == pytest.approx(42.0)
        assert 100.0 * (M - 42.0) / M == pytest.approx(point.value)


def test_composition_validation():
    with pytest.raises(ValidationError, match="A_s"):
        Composition(A_s=-1.0).validate()
    with pytest.raises(ValidationError, match="100"):
        Composition(A_s=60.0, A_ns=60.0).validate()
    with pytest.raises(ValidationError, match="exceeds total water"):
        initial_state(ScenarioConfig("x", composition=Composition(F_sol=14.0)), ModelParams(lambda_s=50.0))


def test_unknown_paths():
    base = baseline_scenario()
    for path in ("composition.sugar", "water.rain", "initial.z", "params.transport.nope"):
        with pytest.raises(UnknownParameter):
            apply_overrides(base, ModelParams(), {path: 1.0})
    with pytest.raises(UnknownParameter):
        sweep(ModelParams(), "params.nope", [1.0])


def test_empty_sweep():
    result = sweep(ModelParams(), "params.transport.tau", [], integration=FAST)
    assert result.rows == [] and result.runs == []


def test_single_default_value_matches_plain_run():
    params = ModelParams()
    plain = run_scenario(baseline_scenario(), params, FAST, workers=1)
    swept = sweep(params, "params.transport.tau", [params.tau], integration=FAST, workers=1)
    assert plain.axis == "point" and swept.axis == "params.transport.tau"
    strip = lambda row: replace(row, value=None)  # noqa: E731
    assert [strip(r) for r in swept.rows] == [strip(r) for r in plain.rows]


def test_failed_point_does_not_abort_sweep():
    scenario = replace(baseline_scenario(), name="bad-dose")
    result = sweep(ModelParams(lambda_s=50.0), "composition.F_sol", [0.0, 14.0], scenario, FAST, workers=1)
    assert result.rows[0].status == "reached_L"
    assert result.rows[1].status.startswith("failed")
    assert result.runs[1] is None


def test_deterministic_and_order_preserving():
    params = ModelParams()
    values = [5.0, 20.0, 10.0]
    serial = sweep(params, "params.transport.tau", values, integration=FAST, workers=1)
    parallel = sweep(params, "params.transport.tau", values, integration=FAST, workers=3)
    assert [r.value for r in parallel.rows] == values
    assert serial.rows == parallel.rows


def test_ratios_within_bounds():
    result = run_scenario(get_builtin("solubilization-ratio"), ModelParams(), FAST, workers=1)
    assert len(result.rows) == 3
    for row in result.rows:
        assert 0.0 <= row.absorbed_over_DM_pct <= 100.0
        assert 0.0 <= row.dry_over_total_absorbed_pct <= 100.0


def test_worker_env(monkeypatch):
    monkeypatch.setenv("DIGESTA_THREADS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("DIGESTA_THREADS", "many")
    with pytest.raises(ValidationError):
        default_workers()
    monkeypatch.delenv("DIGESTA_THREADS")
    assert default_workers() >= 1


def test_water_relaxation_sweep_matches_closed_form():
    # reactions and transport off: u = W - 0.1 M decays as exp(-0.9 k_w t)
    off = Profile(peak=0.0)
    params = ModelParams(tau=0.0, k_vol=off, k_surf=0.0, k_surf_tilde=0.0, k_equi=0.0, k_abs=0.0)
    scenario = baseline_scenario()
    state0 = initial_state(scenario, params)
    M0 = total_mass(state0, params)
    u0 = state0.W - 0.1 * M0
    integration = IntegrationConfig(dt=1e-3, t_max=60.0, audit_every=1)
    result = sweep(params, "params.water.k_w", [0.1, 1.0, 10.0], scenario, integration, workers=1)

    times = []
    for k, run in zip((0.1, 1.0, 10.0), result.runs):
        measured = time_to_water_ratio(run, 0.1, 0.01)
        # |u| = 0.01 M with M = M0 + (u - u0) / 0.9
        u_hit = 0.01 * (M0 - u0 / 0.9) / (1.0 - 0.01 / 0.9)
        exact = math.log(u0 / u_hit) / (0.9 * k)
        assert measured == pytest.approx(exact, abs=1e-3 + 1e-6)
        times.append(measured)
    assert times[0] > times[1] > times[2]
