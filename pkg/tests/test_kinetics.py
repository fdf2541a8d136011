import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from digesta.core import BolusState, ModelParams, Profile, Secretion, compute_derived, mu
from digesta.errors import ViscosityBlowup
from digesta.kinetics import (
    ZERO,
    FluxVector,
    absorption_fluxes,
    compile_rhs,
    enzyme_decay_flux,
    equilibrium_fluxes,
    fibre_hydrolysis_fluxes,
    mass_rate,
    rhs,
    secretion_fluxes,
    surfacic_fluxes,
    term_fluxes,
    transport_accel,
    volumic_fluxes,
    water_relaxation_flux,
    water_total_rate,
)

FLAT = Profile(peak=1.0, x_on=-1e3, w_on=1.0, x_off=1e3, w_off=1.0)


def derived_with(params, state=None, **values):
    """Real derived quantities with selected entries overwritten."""
    base = compute_derived(state or BolusState(W=100.0), params)
    return replace(base, **values)


def test_transport_at_rest():
    p = ModelParams(tau=3.0, c0=1.0, c1=0.5, a=2.0)
    s = BolusState(W=100.0)
    d = compute_derived(s, p)
    assert transport_accel(s, d, p) == pytest.approx(3.0 * (1.0 + 0.5 * d.r_sol) / 2.0, rel=1e-15)


def test_transport_at_wave_speed():
    p = ModelParams(c=2.0, K_visco=0.5)
    s = BolusState(v=2.0, W=100.0)
    d = compute_derived(s, p)
    assert transport_accel(s, d, p) == pytest.approx(-(0.5 / d.conc_W) * 2.0, rel=1e-15)


def test_transport_hand_example():
    p = ModelParams(tau=1.0, c=2.0, c0=0.0, c1=1.0, a=1.0, b=1.0, K_visco=0.5)
    s = BolusState(x=1.0, v=1.0, W=100.0)
    d = derived_with(p, s, r_sol=3.0, conc_W=0.1)
    assert transport_accel(s, d, p) == pytest.approx(-4.25, rel=1e-14)


def test_transport_viscosity_guard():
    p = ModelParams()
    s = BolusState(A_nd=10.0, W=0.0)
    with pytest.raises(ViscosityBlowup):
        transport_accel(s, compute_derived(s, p), p)


def test_volumic_examples():
    p = ModelParams(alpha=3.0, beta=2.0, k_vol=replace(FLAT, peak=0.2))
    d = derived_with(p, conc_A_s=0.1, V_app=50.0)
    f = volumic_fluxes(BolusState(), d, p)
    assert (f.A_s_dm, f.B_int_dm, f.W) == pytest.approx((-1.0, 1.0, 1.0), rel=1e-12)
    assert volumic_fluxes(BolusState(W=100.0), compute_derived(BolusState(W=100.0), p), p) == ZERO
    same = ModelParams(alpha=2.0, beta=2.0)
    assert volumic_fluxes(BolusState(), derived_with(same, conc_A_s=0.3), same).W == 0.0


def test_fibre_hydrolysis_examples():
    p = ModelParams(k_s=1.0, lambda_s=4.0, beta=2.0, ph=FLAT)
    d = derived_with(p, conc_F_sol=0.02, V_app=100.0)
    f = fibre_hydrolysis_fluxes(BolusState(e_exo=0.5), d, p)
    assert (f.F_sol_dm, f.B_int_dm, f.W) == pytest.approx((-1.0, 1.0, 2.0), rel=1e-12)
    assert fibre_hydrolysis_fluxes(BolusState(e_exo=0.0), d, p) == ZERO
    neutral = ModelParams(lambda_s=2.0, beta=2.0, ph=FLAT)
    assert fibre_hydrolysis_fluxes(BolusState(e_exo=1.0), d, neutral).W == 0.0


def test_surfacic_examples():
    p = ModelParams(k_surf=0.1, k_surf_tilde=0.0, alpha=3.0, gamma=1.0)
    # the rate law sees the hydrated concentration (1 + alpha) * [A_s]
    d = derived_with(p, conc_A_s=0.2 / 4.0, conc_W=0.1, S_sol=10.0)
    f = surfacic_fluxes(BolusState(), d, p)
    assert (f.A_s_dm, f.B_abs_dm, f.W) == pytest.approx((-0.02, 0.02, 0.04), rel=1e-12)
    dry = derived_with(p, conc_A_s=0.2, conc_W=0.0, S_sol=10.0)
    assert surfacic_fluxes(BolusState(), dry, p) == FluxVector()
    uniform = ModelParams(alpha=2.0, beta=2.0, gamma=2.0)
    d2 = derived_with(uniform, conc_A_s=0.2, conc_B_int=0.1, conc_W=0.3)
    assert surfacic_fluxes(BolusState(), d2, uniform).W == 0.0


def test_equilibrium_example():
    # mu = 2 at [W] = K_mu; hydrated A_s = 1 with alpha = 1 -> A_s_dm = 0.5
    p = ModelParams(k_equi=1.0, mu_max=4.0, K_mu=0.1, alpha=1.0)
    s = BolusState(A_ns=3.0, A_s_dm=0.5)
    d = derived_with(p, s, conc_W=0.1)
    f = equilibrium_fluxes(s, d, p)
    # drive 5 moves 5 g of dry matter and binds 5 g of water
    assert (f.A_ns, f.A_s_dm, f.W) == pytest.approx((-5.0, 5.0, -5.0), rel=1e-12)


def test_equilibrium_fixed_point():
    p = ModelParams(k_equi=7.0, alpha=1.5)
    s = BolusState(A_ns=4.0, A_s_dm=1.0, W=60.0)
    d = compute_derived(s, p)
    # hydrated A_s equal to mu([W]) * A_ns, with [W] held at its current value
    s = replace(s, A_s_dm=mu(d.conc_W, p) * s.A_ns / (1.0 + p.alpha))
    f = equilibrium_fluxes(s, d, p)
    assert abs(f.A_ns) <= 1e-15 * p.k_equi * s.A_ns
    empty = BolusState(W=10.0)
    assert equilibrium_fluxes(empty, compute_derived(empty, p), p) == FluxVector()


def test_absorption_examples():
    p = ModelParams(k_abs=0.5, gamma=2.0)
    d = derived_with(p, conc_B_abs=0.04, S_sol=20.0)
    f = absorption_fluxes(BolusState(), d, p)
    assert (f.B_abs_dm, f.W, f.absorbed_dm) == pytest.approx((-0.4, 0.8, 0.4), rel=1e-12)
    assert absorption_fluxes(BolusState(), d, ModelParams(k_abs=0.5, gamma=0.0)).W == 0.0
    assert absorption_fluxes(BolusState(), derived_with(p, conc_B_abs=0.0), p) == FluxVector()


def test_water_relaxation_examples():
    p = ModelParams(k_w=2.0, w_target=0.1)
    s = BolusState(W=30.0)
    f = water_relaxation_flux(s, derived_with(p, s, M=200.0), p)
    assert f.W == pytest.approx(-20.0, rel=1e-15)
    assert f.absorbed_water == pytest.approx(20.0, rel=1e-15)
    assert water_relaxation_flux(s, derived_with(p, s, M=300.0), p).W == 0.0
    assert water_relaxation_flux(s, derived_with(p, s, M=400.0), p).W > 0.0


def test_secretion_examples():
    assert secretion_fluxes(BolusState(x=2.0), ModelParams()) == ZERO
    p = ModelParams(secretion=Secretion(rate=1.0, x_start=1.0, x_end=3.0))
    f = secretion_fluxes(BolusState(x=2.0), p)
    assert f.B_int_dm == 1.0 and f.secreted_dm == 1.0
    assert secretion_fluxes(BolusState(x=5.0), p) == ZERO


def test_enzyme_decay_examples():
    assert enzyme_decay_flux(BolusState(e_exo=4.0), ModelParams(k_e=0.5)).e_exo == -2.0
    assert enzyme_decay_flux(BolusState(e_exo=0.0), ModelParams(k_e=0.5)).e_exo == 0.0
    assert enzyme_decay_flux(BolusState(e_exo=3.0), ModelParams(k_e=0.0)).e_exo == 0.0


def test_decoupled_when_no_reactive_mass():
    s = BolusState(v=0.5, W=80.0)
    terms = term_fluxes(s, ModelParams())
    nonzero = {name for name, f in terms.items() if f != ZERO}
    assert nonzero == {"transport", "water_relaxation"}


def test_baseline_reference_state_is_finite_and_conserves_dry_matter():
    p = ModelParams()
    s = BolusState(A_nd=6.72, A_ns=17.64, A_s_dm=17.64, W=78.0 - p.alpha * 17.64, e_exo=0.0)
    f = rhs(s, p)
    assert all(math.isfinite(v) for v in f.as_list())
    dry = f.A_nd + f.A_ns + f.A_s_dm + f.B_int_dm + f.B_abs_dm + f.F_sol_dm + f.F_insol_dm
    assert dry + f.absorbed_dm - f.secreted_dm == pytest.approx(0.0, abs=1e-12)


# property tests over random valid states

masses = st.floats(min_value=0.0, max_value=40.0, allow_nan=False)
coef = st.floats(min_value=0.0, max_value=5.0, allow_nan=False)


@st.composite
def states(draw):
    return BolusState(
        x=draw(st.floats(min_value=0.0, max_value=17.0)),
        v=draw(st.floats(min_value=-1.0, max_value=10.0)),
        A_nd=draw(masses),
        A_ns=draw(masses),
        A_s_dm=draw(masses),
        B_int_dm=draw(masses),
        B_abs_dm=draw(masses),
        F_sol_dm=draw(masses),
        F_insol_dm=draw(masses),
        W=draw(st.floats(min_value=1.0, max_value=150.0)),
        e_exo=draw(st.floats(min_value=0.0, max_value=2.0)),
    )


@st.composite
def param_sets(draw):
    return ModelParams(
        alpha=draw(coef),
        beta=draw(coef),
        gamma=draw(coef),
        lambda_s=draw(coef),
        lambda_i=draw(coef),
        k_surf=draw(coef),
        k_surf_tilde=draw(coef),
        k_equi=draw(coef),
        k_abs=draw(coef),
        k_w=draw(coef),
        k_s=draw(coef),
        secretion=Secretion(rate=draw(coef), x_start=0.0, x_end=draw(st.floats(0.0, 17.0))),
    )


@settings(max_examples=200, deadline=None)
@given(states(), param_sets())
def test_superposition(state, params):
    terms = term_fluxes(state, params)
    assert len(terms) == 9
    total = [0.0] * len(ZERO.as_list())
    for f in terms.values():
        total = [a + b for a, b in zip(total, f.as_list())]
    assert rhs(state, params).as_list() == pytest.approx(total, rel=1e-15, abs=0.0)


@settings(max_examples=200, deadline=None)
@given(states(), param_sets())
def test_reaction_terms_conserve_dry_matter(state, params):
    for name, f in term_fluxes(state, params).items():
        if name in ("transport", "water_relaxation", "secretion", "enzyme_decay"):
            continue
        dry = f.A_nd + f.A_ns + f.A_s_dm + f.B_int_dm + f.B_abs_dm + f.F_sol_dm + f.F_insol_dm
        scale = max(1.0, *(abs(v) for v in f.as_list()))
        assert dry + f.absorbed_dm == pytest.approx(0.0, abs=1e-12 * scale), name


@settings(max_examples=200, deadline=None)
@given(states(), param_sets())
def test_water_bookkeeping(state, params):
    f = rhs(state, params)
    d = compute_derived(state, params)
    expected = (
        f.W
        + params.alpha * f.A_s_dm
        + params.beta * f.B_int_dm
        + params.gamma * f.B_abs_dm
        + params.lambda_s * f.F_sol_dm
        + params.lambda_i * f.F_insol_dm
    )
    assert water_total_rate(f, params) == pytest.approx(expected, abs=1e-12 * d.M)


@settings(max_examples=200, deadline=None)
@given(states(), param_sets())
def test_mass_rate_is_wall_exchange(state, params):
    f = rhs(state, params)
    secreted = params.secretion.at(state.x)
    hydration = params.alpha if params.secretion.target == "A_s" else params.beta
    expected = -f.absorbed_dm - f.absorbed_water + (1.0 + hydration) * secreted
    scale = max(1.0, *(abs(v) for v in f.as_list()))
    assert mass_rate(f, params) == pytest.approx(expected, abs=1e-11 * scale)


@settings(max_examples=100, deadline=None)
@given(states(), st.floats(min_value=0.0, max_value=5.0))
def test_closed_system_mass_constant(state, h):
    p = ModelParams(alpha=h, beta=h, gamma=h, lambda_s=h, k_abs=0.0, k_w=0.0)
    f = rhs(state, p)
    scale = max(1.0, *(abs(v) for v in f.as_list()))
    assert mass_rate(f, p) == pytest.approx(0.0, abs=1e-12 * scale)


@settings(max_examples=200, deadline=None)
@given(states(), param_sets())
def test_compiled_rhs_matches_reference(state, params):
    fast = compile_rhs(params)(state.as_list())
    assert fast == pytest.approx(rhs(state, params).as_list(), rel=1e-12, abs=1e-12)
