"""Time integration of the bolus ODE.

Two schemes are provided: classical fixed-step RK4 and an adaptive
Dormand-Prince 5(4) pair with PI step-size control.  Integration stops when
the bolus reaches the end of the intestine (``x >= L``), at ``t_max``, or when
the state becomes physically invalid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from digesta.core import (
    DRY_FIELDS,
    INDEX,
    NONNEGATIVE_FIELDS,
    BolusState,
    ModelParams,
    compute_derived,
)
from digesta.errors import DegenerateBolus, NegativeMass, ValidationError, ViscosityBlowup
from digesta.kinetics import compile_rhs, prefactor_mass_rate, wall_mass_rate

_NONNEG = tuple(INDEX[name] for name in NONNEGATIVE_FIELDS)
_DRY = tuple(INDEX[name] for name in DRY_FIELDS)
_X = INDEX["x"]

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


@dataclass(frozen=True)
class IntegrationConfig:
    method: str = "rk4"
    dt: float = 1e-3
    tol_rel: float = 1e-6
    tol_abs: float = 1e-9
    dt_min: float = 1e-9
    dt_max: float = 0.05
    t_max: float = 24.0
    # exit position; None means params.L
    L: float | None = None
    # record a trajectory sample every this many accepted steps
    audit_every: int = 100
    clamp_threshold: float = 1e-12
    max_steps: int = 50_000_000

    def __post_init__(self) -> None:
        if self.method not in ("rk4", "adaptive"):
            raise ValidationError("integrator.method must be 'rk4' or 'adaptive'")
        if not self.dt > 0:
            raise ValidationError("integrator.dt must be > 0")
        if not (self.tol_rel > 0 and self.tol_abs > 0):
            raise ValidationError("integrator.tol_rel and integrator.tol_abs must be > 0")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValidationError("integrator.dt_min must be > 0 and ≤ dt_max")
        if not self.t_max > 0:
            raise ValidationError("integrator.t_max must be > 0")
        if self.L is not None and not self.L > 0:
            raise ValidationError("integrator.L must be > 0")
        if self.audit_every < 1:
            raise ValidationError("integrator.audit_every must be ≥ 1")
        if not self.clamp_threshold >= 0:
            raise ValidationError("integrator.clamp_threshold must be ≥ 0")


@dataclass(frozen=True)
class TrajectoryRecord:
    t: float
    state: BolusState
    M: float
    V: float
    r_sol: float
    W_ratio: float
    DM: float


@dataclass(frozen=True)
class AuditReport:
    """Relative conservation residuals per record and their maxima."""

    mass: list[float]
    volume: list[float]
    dry: list[float]
    # largest gap between the component mass rate and the M/(M - W) prefactor form
    prefactor_gap: float = 0.0

    @property
    def max_mass(self) -> float:
        return max(self.mass, default=0.0)

    @property
    def max_volume(self) -> float:
        return max(self.volume, default=0.0)

    @property
    def max_dry(self) -> float:
        return max(self.dry, default=0.0)

    @property
    def max_residual(self) -> float:
        return max(self.max_mass, self.max_volume, self.max_dry)


@dataclass
class IntegrationResult:
    trajectory: list[TrajectoryRecord]
    exit_time: float | None
    exit_reason: str
    final_state: BolusState
    audit: AuditReport
    steps: int = 0
    rejected: int = 0
    diagnostic: str = ""
    audit_max_residual: float = field(init=False)

    def __post_init__(self) -> None:
        self.audit_max_residual = self.audit.max_residual


def _rk4(f, y, h):
    k1 = f(y)
    hh = 0.5 * h
    k2 = f([a + hh * b for a, b in zip(y, k1)])
    k3 = f([a + hh * b for a, b in zip(y, k2)])
    k4 = f([a + h * b for a, b in zip(y, k3)])
    h6 = h / 6.0
    return [a + h6 * (b + 2.0 * (c + d) + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]


def _dopri(f, y, h, k1=None):
    """One Dormand-Prince step; returns (5th-order solution, error vector)."""
    ks = [f(y) if k1 is None else k1]
    for i in range(1, 7):
        coeffs = _A[i]
        stage = list(y)
        for a_ij, k in zip(coeffs, ks):
            if a_ij:
                ha = h * a_ij
                stage = [s + ha * kk for s, kk in zip(stage, k)]
        ks.append(f(stage))
    y5 = list(y)
    err = [0.0] * len(y)
    for b, e, k in zip(_B5, _E, ks):
        if b:
            hb = h * b
            y5 = [s + hb * kk for s, kk in zip(y5, k)]
        if e:
            he = h * e
            err = [s + he * kk for s, kk in zip(err, k)]
    return y5, err


def _clamp(y, threshold):
    """Zero tiny negative masses in place; return the name of a pool that is too negative."""
    for i in _NONNEG:
        if y[i] < 0.0:
            if y[i] > -threshold:
                y[i] = 0.0
            else:
                return NONNEGATIVE_FIELDS[_NONNEG.index(i)]
    return None


def step(state: BolusState, params: ModelParams, dt: float, clamp_threshold: float = 1e-12) -> BolusState:
    """Advance ``state`` by one classical RK4 step."""
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    y = _rk4(compile_rhs(params), state.as_list(), dt)
    bad = _clamp(y, clamp_threshold)
    if bad is not None:
        raise NegativeMass(f"{bad} = {y[INDEX[bad]]:.3g} after step at t={state.t:g} h")
    return BolusState.from_list(y, t=state.t + dt)


def _record(y, t, params) -> TrajectoryRecord:
    state = BolusState.from_list(y, t=t)
    d = compute_derived(state, params)
    return TrajectoryRecord(t=t, state=state, M=d.M, V=d.V, r_sol=d.r_sol, W_ratio=d.W_ratio, DM=d.DM)


def integrate(
    state0: BolusState, params: ModelParams, config: IntegrationConfig | None = None
) -> IntegrationResult:
    """Integrate from ``state0`` until exit, ``t_max`` or breakdown.

    A breakdown during the run ends it with exit_reason "dehydrated" or
    "degenerate"; an initial state that is already degenerate raises.
    """
    config = config or IntegrationConfig()
    L = params.L if config.L is None else config.L
    if not 0 <= state0.x < L:
        raise ValidationError(f"initial position x={state0.x:g} must lie in [0, {L:g})")
    negative = state0.negative_pools()
    if negative:
        raise ValidationError(f"initial state has negative pools: {', '.join(negative)}")
    f = compile_rhs(params)
    threshold = config.clamp_threshold
    adaptive = config.method == "adaptive"

    t = state0.t
    t_end = state0.t + config.t_max
    y = state0.as_list()
    trajectory = [_record(y, t, params)]
    steps = rejected = 0
    h = config.dt if not adaptive else min(config.dt, config.dt_max)
    err_prev = 1.0
    exit_time = None
    reason = "t_max"
    diagnostic = ""

    def advance(y, h):
        if adaptive:
            return _dopri(f, y, h)[0]
        return _rk4(f, y, h)

    try:
        while t < t_end - 1e-12 * max(1.0, abs(t_end)):
            if steps >= config.max_steps:
                reason = "t_max"
                diagnostic = f"step budget {config.max_steps} exhausted"
                break
            h_try = min(h, t_end - t)
            if adaptive:
                # a failure at the current state is genuine; at a trial stage it means h is too long
                k1 = f(y)
                try:
                    y_new, err = _dopri(f, y, h_try, k1)
                except (ViscosityBlowup, DegenerateBolus):
                    rejected += 1
                    h = 0.5 * h_try
                    if h < config.dt_min:
                        raise
                    continue
                norm = math.sqrt(
                    sum(
                        (e / (config.tol_abs + config.tol_rel * max(abs(a), abs(b)))) ** 2
                        for e, a, b in zip(err, y, y_new)
                    )
                    / len(y)
                )
                bad = _clamp(y_new, threshold)
                if norm > 1.0 or bad is not None:
                    rejected += 1
                    if bad is not None:
                        h = 0.5 * h_try
                    else:
                        h = h_try * max(0.2, 0.9 * norm ** -0.2)
                    if h < config.dt_min:
                        raise NegativeMass(
                            f"step size fell below dt_min at t={t:g} h"
                            + (f" ({bad} negative)" if bad else "")
                        )
                    continue
                norm = max(norm, 1e-10)
                factor = 0.9 * norm ** (-0.7 / 5) * err_prev ** (0.4 / 5)
                h = min(config.dt_max, max(config.dt_min, h_try * min(5.0, max(0.2, factor))))
                err_prev = norm
            else:
                y_new = _rk4(f, y, h_try)
                bad = _clamp(y_new, threshold)
                if bad is not None:
                    raise NegativeMass(f"{bad} = {y_new[INDEX[bad]]:.3g} after step at t={t:g} h")

            steps += 1
            if y_new[_X] >= L:
                theta, y_exit = _locate_exit(advance, y, y_new, h_try, L, threshold)
                t = t + theta * h_try
                y = y_exit
                exit_time = t
                reason = "reached_L"
                break
            y = y_new
            t = t + h_try
            if steps % config.audit_every == 0:
                trajectory.append(_record(y, t, params))
    except ViscosityBlowup as exc:
        reason, diagnostic = "dehydrated", str(exc)
    except DegenerateBolus as exc:
        reason, diagnostic = "degenerate", str(exc)

    if trajectory[-1].t != t:
        trajectory.append(_record(y, t, params))
    audit = conservation_audit(trajectory, params)
    return IntegrationResult(
        trajectory=trajectory,
        exit_time=exit_time,
        exit_reason=reason,
        final_state=trajectory[-1].state,
        audit=audit,
        steps=steps,
        rejected=rejected,
        diagnostic=diagnostic,
    )


def _locate_exit(advance, y, y_new, h, L, threshold):
    """Find the fraction of the step at which x reaches L.

    Starts from linear interpolation of x across the step and refines it by
    secant iteration on re-integrated partial steps.
    """
    x0, x1 = y[_X], y_new[_X]
    lo, hi = 0.0, 1.0
    f_lo, f_hi = x0 - L, x1 - L
    theta = (L - x0) / (x1 - x0)
    y_theta = y_new
    for _ in range(30):
        y_theta = advance(y, theta * h)
        _clamp(y_theta, threshold)
        g = y_theta[_X] - L
        if abs(g) <= 1e-10 * L:
            break
        if g < 0:
            lo, f_lo = theta, g
        else:
            hi, f_hi = theta, g
        theta = lo - f_lo * (hi - lo) / (f_hi - f_lo)
        if not lo < theta < hi:
            theta = 0.5 * (lo + hi)
    return theta, y_theta


def conservation_audit(trajectory: list[TrajectoryRecord], params: ModelParams) -> AuditReport:
    """Relative residuals of the three bookkeeping identities along a trajectory.

    * mass: algebraic M against the initial M plus integrated wall fluxes and
      secretions (secreted dry matter enters with its bound water);
    * volume: V rebuilt from the radius against W_tot / rho_w;
    * dry: dry matter + absorbed - secreted against its initial value.
    """
    if not trajectory:
        raise ValueError("empty trajectory")
    first = trajectory[0]
    s0 = first.state
    hydration = params.alpha if params.secretion.target == "A_s" else params.beta
    M0 = first.M
    dry0 = first.DM + s0.absorbed_dm - s0.secreted_dm
    mass, volume, dry = [], [], []
    gap = 0.0
    for rec in trajectory:
        s = rec.state
        predicted = (
            M0
            - (s.absorbed_dm - s0.absorbed_dm)
            - (s.absorbed_water - s0.absorbed_water)
            + (1.0 + hydration) * (s.secreted_dm - s0.secreted_dm)
        )
        mass.append(abs(rec.M - predicted) / M0)
        V_water = (rec.M - rec.DM) / params.rho_w
        V_geom = math.pi * rec.r_sol**2 * params.ell + params.lambda_s * s.F_sol_dm / params.rho_w
        volume.append(abs(V_geom - V_water) / V_water if V_water > 0 else 0.0)
        dry_now = rec.DM + s.absorbed_dm - s.secreted_dm
        dry.append(abs(dry_now - dry0) / dry0 if dry0 > 0 else abs(dry_now - dry0))
        try:
            component = wall_mass_rate(s, params)
            literal = prefactor_mass_rate(s, params)
        except (DegenerateBolus, ZeroDivisionError):
            continue
        gap = max(gap, abs(component - literal))
    return AuditReport(mass=mass, volume=volume, dry=dry, prefactor_gap=gap)
