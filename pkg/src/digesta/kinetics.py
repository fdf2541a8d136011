"""Flux terms of the digestion ODE and their superposition.

Each ``*_flux``/``*_fluxes`` function returns the contribution of one process
to d/dt of every state field.  :func:`rhs` is their literal sum.

:func:`compile_rhs` builds an equivalent closure over plain float lists for
the integrator's inner loop; tests hold it to agreement with :func:`rhs`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from digesta.core import (
    STATE_FIELDS,
    BolusState,
    DerivedQuantities,
    ModelParams,
    compute_derived,
    k_vol_at,
    mu,
    ph_at,
)
from digesta.errors import DegenerateBolus, ViscosityBlowup


@dataclass(frozen=True)
class FluxVector:
    """d/dt of each state field (g/h for masses, length/h for x, length/h² for v)."""

    x: float = 0.0
    v: float = 0.0
    A_nd: float = 0.0
    A_ns: float = 0.0
    A_s_dm: float = 0.0
    B_int_dm: float = 0.0
    B_abs_dm: float = 0.0
    F_sol_dm: float = 0.0
    F_insol_dm: float = 0.0
    W: float = 0.0
    e_exo: float = 0.0
    absorbed_dm: float = 0.0
    absorbed_water: float = 0.0
    secreted_dm: float = 0.0

    def __add__(self, other: "FluxVector") -> "FluxVector":
        return FluxVector(*(a + b for a, b in zip(self.as_list(), other.as_list())))

    def as_list(self) -> list[float]:
        return [getattr(self, f.name) for f in fields(self)]


ZERO = FluxVector()


def transport_accel(state: BolusState, derived: DerivedQuantities, params: ModelParams) -> float:
    """Averaged peristaltic forcing minus viscous friction."""
    if derived.conc_W <= params.eps_W:
        raise ViscosityBlowup(
            f"available-water concentration {derived.conc_W:.3g} ≤ {params.eps_W:g} at t={state.t:g} h"
        )
    forcing = (
        params.tau
        * (1.0 - state.v / params.c)
        * (params.c0 + params.c1 * derived.r_sol)
        / (params.a + params.b * state.x)
    )
    return forcing - params.K_visco / derived.conc_W * state.v


def volumic_fluxes(state: BolusState, derived: DerivedQuantities, params: ModelParams) -> FluxVector:
    """Pancreatic hydrolysis A_s -> B_int inside the apparent volume."""
    rate = k_vol_at(state.x, params) * derived.conc_A_s * derived.V_app
    return FluxVector(
        A_s_dm=-rate,
        B_int_dm=rate,
        W=(params.alpha - params.beta) * rate,
    )


def fibre_hydrolysis_fluxes(
    state: BolusState, derived: DerivedQuantities, params: ModelParams
) -> FluxVector:
    """Soluble fibre -> B_int by ingested exogenous enzymes."""
    rate = params.k_s * state.e_exo * ph_at(state.x, params) * derived.conc_F_sol * derived.V_app
    return FluxVector(
        F_sol_dm=-rate,
        B_int_dm=rate,
        W=(params.lambda_s - params.beta) * rate,
    )


def surfacic_fluxes(state: BolusState, derived: DerivedQuantities, params: ModelParams) -> FluxVector:
    """Brush-border hydrolysis of A_s and B_int into B_abs at the wall.

    Rates use the apparent concentration of the *hydrated* species, i.e.
    dry mass plus its bound water.
    """
    hyd_A_s = (1.0 + params.alpha) * derived.conc_A_s
    hyd_B_int = (1.0 + params.beta) * derived.conc_B_int
    contact = derived.conc_W * derived.S_sol
    from_A_s = params.k_surf * hyd_A_s * contact
    from_B_int = params.k_surf_tilde * hyd_B_int * contact
    return FluxVector(
        A_s_dm=-from_A_s,
        B_int_dm=-from_B_int,
        B_abs_dm=from_A_s + from_B_int,
        W=(params.beta - params.gamma) * from_B_int + (params.alpha - params.gamma) * from_A_s,
    )


def equilibrium_fluxes(state: BolusState, derived: DerivedQuantities, params: ModelParams) -> FluxVector:
    """Relaxation of A_ns <-> A_s toward A_s = mu([W]) * A_ns.

    A_s here is the hydrated pool (1 + alpha) * A_s_dm.  A positive drive
    solubilizes: dry mass moves from A_ns to A_s_dm and the bound water it
    needs is drawn from W.  Reversal releases that water.
    """
    drive = params.k_equi * (
        mu(derived.conc_W, params) * state.A_ns - (1.0 + params.alpha) * state.A_s_dm
    )
    return FluxVector(A_ns=-drive, A_s_dm=drive, W=-params.alpha * drive)


def absorption_fluxes(state: BolusState, derived: DerivedQuantities, params: ModelParams) -> FluxVector:
    """Uptake of B_abs through the wall; its bound water stays in the lumen."""
    rate = params.k_abs * derived.conc_B_abs * derived.S_sol
    return FluxVector(B_abs_dm=-rate, W=params.gamma * rate, absorbed_dm=rate)


def water_relaxation_flux(
    state: BolusState, derived: DerivedQuantities, params: ModelParams
) -> FluxVector:
    """Osmotic exchange pulling W/M toward ``w_target``; negative = secretion into lumen."""
    rate = params.k_w * (state.W - params.w_target * derived.M)
    return FluxVector(W=-rate, absorbed_water=rate)


def secretion_fluxes(state: BolusState, params: ModelParams) -> FluxVector:
    rate = params.secretion.at(state.x)
    if not rate:
        return ZERO
    if params.secretion.target == "A_s":
        return FluxVector(A_s_dm=rate, secreted_dm=rate)
    return FluxVector(B_int_dm=rate, secreted_dm=rate)


def enzyme_decay_flux(state: BolusState, params: ModelParams) -> FluxVector:
    return FluxVector(e_exo=-params.k_e * state.e_exo)


def term_fluxes(state: BolusState, params: ModelParams) -> dict[str, FluxVector]:
    """Every process contribution at ``state``, keyed by process name."""
    derived = compute_derived(state, params)
    return {
        "transport": FluxVector(x=state.v, v=transport_accel(state, derived, params)),
        "volumic": volumic_fluxes(state, derived, params),
        "fibre_hydrolysis": fibre_hydrolysis_fluxes(state, derived, params),
        "surfacic": surfacic_fluxes(state, derived, params),
        "equilibrium": equilibrium_fluxes(state, derived, params),
        "absorption": absorption_fluxes(state, derived, params),
        "water_relaxation": water_relaxation_flux(state, derived, params),
        "secretion": secretion_fluxes(state, params),
        "enzyme_decay": enzyme_decay_flux(state, params),
    }


def rhs(state: BolusState, params: ModelParams) -> FluxVector:
    total = ZERO
    for term in term_fluxes(state, params).values():
        total = total + term
    return total


def water_total_rate(flux: FluxVector, params: ModelParams) -> float:
    """d(W_tot)/dt implied by component fluxes."""
    return (
        flux.W
        + params.alpha * flux.A_s_dm
        + params.beta * flux.B_int_dm
        + params.gamma * flux.B_abs_dm
        + params.lambda_s * flux.F_sol_dm
        + params.lambda_i * flux.F_insol_dm
    )


def mass_rate(flux: FluxVector, params: ModelParams) -> float:
    """dM/dt implied by component fluxes."""
    dry = (
        flux.A_nd
        + flux.A_ns
        + flux.A_s_dm
        + flux.B_int_dm
        + flux.B_abs_dm
        + flux.F_sol_dm
        + flux.F_insol_dm
    )
    return dry + water_total_rate(flux, params)


def wall_mass_rate(state: BolusState, params: ModelParams) -> float:
    """dM/dt from wall exchange alone: -absorption - water relaxation + secretion (with bound water)."""
    derived = compute_derived(state, params)
    absorbed = absorption_fluxes(state, derived, params).absorbed_dm
    relaxed = water_relaxation_flux(state, derived, params).absorbed_water
    secreted = params.secretion.at(state.x) * (1.0 + _secretion_hydration(params))
    return -absorbed - relaxed + secreted


def prefactor_mass_rate(state: BolusState, params: ModelParams) -> float:
    """dM/dt in the form carrying an M/(M - W) prefactor on the wall fluxes.

    That form does not follow from the component equations when M is
    computed algebraically; it is only evaluated to report the gap.
    """
    derived = compute_derived(state, params)
    absorbed = absorption_fluxes(state, derived, params).absorbed_dm
    relaxed = water_relaxation_flux(state, derived, params).absorbed_water
    secreted = params.secretion.at(state.x)
    return derived.M / (derived.M - state.W) * (-relaxed - absorbed + secreted)


def _secretion_hydration(params: ModelParams) -> float:
    return params.alpha if params.secretion.target == "A_s" else params.beta


def compile_rhs(params: ModelParams):
    """Return ``f(y) -> dy/dt`` over a float list ordered as ``STATE_FIELDS``.

    Same equations as :func:`rhs` with the derived quantities inlined; raises
    the same errors.
    """
    al, be, ga = params.alpha, params.beta, params.gamma
    ls, li = params.lambda_s, params.lambda_i
    kv, ph = params.k_vol, params.ph
    kv_pk, kv_on, kv_won, kv_off, kv_woff = kv.peak, kv.x_on, kv.w_on, kv.x_off, kv.w_off
    ph_pk, ph_on, ph_won, ph_off, ph_woff = ph.peak, ph.x_on, ph.w_on, ph.x_off, ph.w_off
    k_surf, k_surf_t, k_equi = params.k_surf, params.k_surf_tilde, params.k_equi
    mu_max, K_mu, k_abs, k_s, k_e = params.mu_max, params.K_mu, params.k_abs, params.k_s, params.k_e
    k_w, w_target, rho = params.k_w, params.w_target, params.rho_w
    tau, c, c0, c1, a, b = params.tau, params.c, params.c0, params.c1, params.a, params.b
    K_visco, eps_W = params.K_visco, params.eps_W
    pi_ell = math.pi * params.ell
    two_pi_ell = 2.0 * math.pi * params.ell
    sec = params.secretion
    sec_rate, sec_lo, sec_hi = sec.rate, sec.x_start, sec.x_end
    sec_to_A_s = sec.target == "A_s"
    tanh, sqrt = math.tanh, math.sqrt

    def f(y):
        x, v, A_nd, A_ns, A_s, B_int, B_abs, F_sol, F_insol, W, e, _, _, _ = y
        W_sol = ls * F_sol
        W_insol = li * F_insol
        W_tot = W + al * A_s + be * B_int + ga * B_abs + W_sol + W_insol
        M = A_nd + A_ns + A_s + B_int + B_abs + F_sol + F_insol + W_tot
        acc_mass = M - (F_insol + W_insol)
        if acc_mass <= 0 or W_tot - W_sol < 0:
            raise DegenerateBolus(
                f"degenerate bolus (M - F_insol = {acc_mass:g}, W_tot - W_sol = {W_tot - W_sol:g})"
            )
        V_app = (W_tot - W_insol) / rho
        r_sol = sqrt((W_tot - W_sol) / rho / pi_ell)
        S_sol = two_pi_ell * r_sol
        cW = W / acc_mass
        if cW <= eps_W:
            raise ViscosityBlowup(f"available-water concentration {cW:.3g} ≤ {eps_W:g}")

        acc = tau * (1.0 - v / c) * (c0 + c1 * r_sol) / (a + b * x) - K_visco / cW * v

        k_vol = (
            kv_pk
            * 0.5 * (1.0 + tanh(0.5 * (x - kv_on) / kv_won))
            * 0.5 * (1.0 + tanh(0.5 * (kv_off - x) / kv_woff))
        )
        vol = k_vol * (A_s / acc_mass) * V_app
        if e:
            ph_x = (
                ph_pk
                * 0.5 * (1.0 + tanh(0.5 * (x - ph_on) / ph_won))
                * 0.5 * (1.0 + tanh(0.5 * (ph_off - x) / ph_woff))
            )
            hyd = k_s * e * ph_x * (F_sol / acc_mass) * V_app
        else:
            hyd = 0.0
        contact = cW * S_sol
        surf_A = k_surf * ((1.0 + al) * (A_s / acc_mass)) * contact
        surf_B = k_surf_t * ((1.0 + be) * (B_int / acc_mass)) * contact
        drive = k_equi * (mu_max * cW / (cW + K_mu) * A_ns - (1.0 + al) * A_s)
        absorb = k_abs * (B_abs / acc_mass) * S_sol
        relax = k_w * (W - w_target * M)
        s = sec_rate if (sec_rate and sec_lo <= x <= sec_hi) else 0.0

        dW = (
            (al - be) * vol
            + (ls - be) * hyd
            + (be - ga) * surf_B
            + (al - ga) * surf_A
            - al * drive
            + ga * absorb
            - relax
        )
        d_A_s = -vol - surf_A + drive + (s if sec_to_A_s else 0.0)
        d_B_int = vol + hyd - surf_B + (0.0 if sec_to_A_s else s)
        return [
            v,
            acc,
            0.0,
            -drive,
            d_A_s,
            d_B_int,
            surf_A + surf_B - absorb,
            -hyd,
            0.0,
            dW,
            -k_e * e,
            absorb,
            relax,
            s,
        ]

    return f


assert len(STATE_FIELDS) == len(fields(FluxVector))
