"""In-silico experiments: initial-bolus construction, sweeps and summaries.

A scenario fixes an entering bolus (dry-matter composition plus water
sources) and a list of sweep points.  Each point is a set of dotted-path
overrides applied to the scenario or to the model parameters before the
bolus is built and integrated.

Override paths::

    params.<section>.<name>      any ModelParams field (see core.PARAM_GROUPS)
    composition.<pool>           percent of dry matter, or composition.dry_matter in g
    water.<K_feed|K_sec|W_drink>
    initial.<e_exo|x|v>
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

from digesta.core import BolusState, ModelParams
from digesta.errors import DigestaError, UnknownParameter, ValidationError
from digesta.integrator import IntegrationConfig, IntegrationResult, integrate

POOLS = ("A_ns", "A_s", "B_int", "B_abs", "F_sol", "F_insol")
SUMMARY_FIELDS = (
    "exit_time_h",
    "absorbed_dm_g",
    "absorbed_over_DM_pct",
    "final_mass_g",
    "dry_over_total_absorbed_pct",
    "status",
)


@dataclass(frozen=True)
class Composition:
    """Entering dry matter: total grams and pool shares in percent of it.

    The non-degradable pool A_nd takes whatever share is left over.
    """

    dry_matter: float = 42.0
    A_ns: float = 42.0
    A_s: float = 42.0
    B_int: float = 0.0
    B_abs: float = 0.0
    F_sol: float = 0.0
    F_insol: float = 0.0

    @property
    def A_nd(self) -> float:
        return 100.0 - sum(getattr(self, p) for p in POOLS)

    def grams(self, pool: str) -> float:
        return getattr(self, pool) * self.dry_matter / 100.0

    def validate(self) -> None:
        if not (math.isfinite(self.dry_matter) and self.dry_matter > 0):
            raise ValidationError("composition.dry_matter must be > 0")
        for pool in POOLS:
            value = getattr(self, pool)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"composition.{pool} must be ≥ 0")
        if self.A_nd < -1e-9:
            raise ValidationError(
                f"composition shares sum to {100 - self.A_nd:g}% of dry matter (> 100%)"
            )


@dataclass(frozen=True)
class WaterSources:
    """Water entering with the bolus: K_feed*DM + K_sec*DM + W_drink.

    ``None`` for K_feed/K_sec means "use the model parameter".
    """

    K_feed: float | None = None
    K_sec: float | None = None
    W_drink: float = 57.0

    def validate(self) -> None:
        for name in ("K_feed", "K_sec", "W_drink"):
            value = getattr(self, name)
            if value is not None and (not math.isfinite(value) or value < 0):
                raise ValidationError(f"water.{name} must be ≥ 0")


@dataclass(frozen=True)
class SweepPoint:
    value: float | str
    set: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Sweep:
    axis: str
    points: tuple[SweepPoint, ...] = ()

    @classmethod
    def over(cls, path: str, values, axis: str | None = None) -> "Sweep":
        return cls(axis=axis or path, points=tuple(SweepPoint(v, {path: v}) for v in values))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    description: str = ""
    composition: Composition = field(default_factory=Composition)
    water: WaterSources = field(default_factory=WaterSources)
    e_exo: float = 0.0
    x0: float = 0.0
    v0: float = 0.0
    overrides: dict = field(default_factory=dict)
    sweep: Sweep | None = None
    outputs: tuple[str, ...] = SUMMARY_FIELDS

    def validate(self) -> None:
        if not self.name:
            raise ValidationError("scenario name must be non-empty")
        self.composition.validate()
        self.water.validate()
        if not (math.isfinite(self.e_exo) and self.e_exo >= 0):
            raise ValidationError("initial.e_exo must be ≥ 0")
        unknown = [o for o in self.outputs if o not in SUMMARY_FIELDS]
        if unknown:
            raise ValidationError(f"unknown output column(s): {', '.join(unknown)}")
        if self.sweep is not None:
            for point in self.sweep.points:
                if isinstance(point.value, float) and not math.isfinite(point.value):
                    raise ValidationError(f"sweep value {point.value} is not finite")


@dataclass(frozen=True)
class SummaryRow:
    value: float | str
    exit_time_h: float | None
    absorbed_dm_g: float | None
    absorbed_over_DM_pct: float | None
    final_mass_g: float | None
    dry_over_total_absorbed_pct: float | None
    status: str


@dataclass
class ScenarioResult:
    name: str
    axis: str
    rows: list[SummaryRow]
    runs: list[IntegrationResult | None]
    outputs: tuple[str, ...] = SUMMARY_FIELDS


def apply_overrides(
    scenario: ScenarioConfig, params: ModelParams, overrides: dict
) -> tuple[ScenarioConfig, ModelParams]:
    """Apply dotted-path overrides; raises UnknownParameter for bad paths."""
    for path, value in overrides.items():
        head, _, rest = path.partition(".")
        if head == "params" or (head not in ("composition", "water", "initial") and "." not in path):
            params = params.with_path(path, value)
        elif head == "composition":
            names = {f.name for f in fields(Composition)}
            if rest not in names:
                raise UnknownParameter(f"unknown parameter: {path}")
            scenario = replace(scenario, composition=replace(scenario.composition, **{rest: float(value)}))
        elif head == "water":
            names = {f.name for f in fields(WaterSources)}
            if rest not in names:
                raise UnknownParameter(f"unknown parameter: {path}")
            scenario = replace(scenario, water=replace(scenario.water, **{rest: float(value)}))
        elif head == "initial":
            key = {"e_exo": "e_exo", "x": "x0", "v": "v0"}.get(rest)
            if key is None:
                raise UnknownParameter(f"unknown parameter: {path}")
            scenario = replace(scenario, **{key: float(value)})
        else:
            params = params.with_path(path, value)
    return scenario, params


def initial_state(scenario: ScenarioConfig, params: ModelParams) -> BolusState:
    """Entering bolus: dry pools from the composition, available water by difference.

    Total water is K_feed*DM + K_sec*DM + W_drink; available water is what
    remains after every pool takes its bound share.
    """
    scenario.validate()
    comp = scenario.composition
    dm = comp.dry_matter
    K_feed = params.K_feed if scenario.water.K_feed is None else scenario.water.K_feed
    K_sec = params.K_sec if scenario.water.K_sec is None else scenario.water.K_sec
    W_tot = (K_feed + K_sec) * dm + scenario.water.W_drink
    A_s, B_int, B_abs = comp.grams("A_s"), comp.grams("B_int"), comp.grams("B_abs")
    F_sol, F_insol = comp.grams("F_sol"), comp.grams("F_insol")
    bound = (
        params.alpha * A_s
        + params.beta * B_int
        + params.gamma * B_abs
        + params.lambda_s * F_sol
        + params.lambda_i * F_insol
    )
    W = W_tot - bound
    if W < 0:
        raise ValidationError(
            f"bound water {bound:g} g exceeds total water {W_tot:g} g in scenario '{scenario.name}'"
        )
    return BolusState(
        x=scenario.x0,
        v=scenario.v0,
        A_nd=max(comp.A_nd, 0.0) * dm / 100.0,
        A_ns=comp.grams("A_ns"),
        A_s_dm=A_s,
        B_int_dm=B_int,
        B_abs_dm=B_abs,
        F_sol_dm=F_sol,
        F_insol_dm=F_insol,
        W=W,
        e_exo=scenario.e_exo,
    )


def summarize(value, run: IntegrationResult, dm0: float) -> SummaryRow:
    final = run.final_state
    absorbed = final.absorbed_dm
    water_out = max(final.absorbed_water, 0.0)
    total = absorbed + water_out
    return SummaryRow(
        value=value,
        exit_time_h=run.exit_time,
        absorbed_dm_g=absorbed,
        absorbed_over_DM_pct=100.0 * absorbed / dm0,
        final_mass_g=run.trajectory[-1].M,
        dry_over_total_absorbed_pct=100.0 * absorbed / total if total > 0 else 0.0,
        status=run.exit_reason,
    )


def _run_point(args):
    scenario, params, point, integration = args
    try:
        sc, pr = apply_overrides(scenario, params, {**scenario.overrides, **point.set})
        state0 = initial_state(sc, pr)
        run = integrate(state0, pr, integration)
    except UnknownParameter:
        raise
    except (DigestaError, ArithmeticError) as exc:
        row = SummaryRow(point.value, None, None, None, None, None, f"failed: {exc}")
        return row, None
    return summarize(point.value, run, state0.dry_matter), run


def default_workers() -> int:
    env = os.environ.get("DIGESTA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"DIGESTA_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_scenario(
    config: ScenarioConfig,
    params: ModelParams | None = None,
    integration: IntegrationConfig | None = None,
    workers: int | None = None,
) -> ScenarioResult:
    """Integrate every sweep point of ``config``; failed points are marked, not raised."""
    params = params or ModelParams()
    integration = integration or IntegrationConfig()
    config.validate()
    # surface bad paths before any work
    apply_overrides(config, params, config.overrides)
    if config.sweep is None:
        axis, points = "point", (SweepPoint("base"),)
    else:
        axis, points = config.sweep.axis, config.sweep.points
        for point in points:
            try:
                apply_overrides(config, params, point.set)
            except ValidationError:
                pass  # reported on that row
    jobs = [(config, params, point, integration) for point in points]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            outcomes = list(pool.map(_run_point, jobs))
    else:
        outcomes = [_run_point(job) for job in jobs]
    return ScenarioResult(
        name=config.name,
        axis=axis,
        rows=[row for row, _ in outcomes],
        runs=[run for _, run in outcomes],
        outputs=config.outputs,
    )


def sweep(
    params: ModelParams,
    axis: str,
    values,
    scenario: ScenarioConfig | None = None,
    integration: IntegrationConfig | None = None,
    workers: int | None = None,
) -> ScenarioResult:
    """One integration per value of the dotted path ``axis``; input order is preserved."""
    scenario = scenario or baseline_scenario()
    # resolve the path even when there are no values to run
    probe_value = _current_value(scenario, params, axis)
    apply_overrides(scenario, params, {axis: probe_value})
    swept = replace(scenario, sweep=Sweep.over(axis, list(values)))
    return run_scenario(swept, params, integration, workers)


def _current_value(scenario: ScenarioConfig, params: ModelParams, path: str):
    head, _, rest = path.partition(".")
    if head == "composition":
        if rest not in {f.name for f in fields(Composition)}:
            raise UnknownParameter(f"unknown parameter: {path}")
        return getattr(scenario.composition, rest)
    if head == "water":
        if rest not in {f.name for f in fields(WaterSources)}:
            raise UnknownParameter(f"unknown parameter: {path}")
        value = getattr(scenario.water, rest)
        return 0.0 if value is None else value
    if head == "initial":
        key = {"e_exo": "e_exo", "x": "x0", "v": "v0"}.get(rest)
        if key is None:
            raise UnknownParameter(f"unknown parameter: {path}")
        return getattr(scenario, key)
    return params.get_path(path)


def water_pct_to_drink(pct: float, dry_matter: float = 42.0) -> float:
    """Drunk water giving ``pct`` % water in a bolus of ``dry_matter`` g with no other sources."""
    return dry_matter * pct / (100.0 - pct)


FIBRE_DOSES = (0.0, 2.0, 7.0, 11.0, 14.0)


def baseline_scenario() -> ScenarioConfig:
    """The 120 g no-fibre bolus: 42 g DM (42% A_s, 42% A_ns, 16% A_nd) and 78 g water."""
    return ScenarioConfig(name="baseline", description="120 g bolus without fibre")


def builtin_scenarios() -> list[ScenarioConfig]:
    base = baseline_scenario()
    hydration = lambda a, b, g: {  # noqa: E731
        "params.hydration.alpha": float(a),
        "params.hydration.beta": float(b),
        "params.hydration.gamma": float(g),
    }
    return [
        replace(
            base,
            name="solubilization-ratio",
            description="A_s vs A_ns share of DM at entry",
            sweep=Sweep(
                "A_s_over_DM_pct",
                tuple(
                    SweepPoint(s, {"composition.A_s": s, "composition.A_ns": ns})
                    for s, ns in ((0.0, 85.0), (42.0, 42.0), (85.0, 0.0))
                ),
            ),
        ),
        replace(
            base,
            name="intermediate-ratio",
            description="B_int vs A_s share of DM at entry, no A_ns",
            sweep=Sweep(
                "B_int_over_DM_pct",
                tuple(
                    SweepPoint(bi, {"composition.B_int": bi, "composition.A_s": s, "composition.A_ns": 0.0})
                    for bi, s in ((0.0, 85.0), (42.0, 42.0), (85.0, 0.0))
                ),
            ),
        ),
        replace(
            base,
            name="insoluble-dose",
            description="insoluble fibre replacing A_nd in a 120 g bolus",
            sweep=Sweep.over("composition.F_insol", FIBRE_DOSES, axis="F_over_DM_pct"),
        ),
        replace(
            base,
            name="soluble-dose",
            description="soluble fibre replacing A_nd in a 120 g bolus",
            sweep=Sweep.over("composition.F_sol", FIBRE_DOSES, axis="F_over_DM_pct"),
        ),
        replace(
            base,
            name="uniform-hydration",
            description="alpha = beta = gamma from 1 to 4",
            sweep=Sweep(
                "alpha_beta_gamma",
                tuple(SweepPoint(float(k), hydration(k, k, k)) for k in (1, 2, 3, 4)),
            ),
        ),
        replace(
            base,
            name="ordered-hydration",
            description="alpha, beta, gamma increasing, uniform, decreasing",
            sweep=Sweep(
                "alpha_beta_gamma",
                tuple(
                    SweepPoint(f"{a}-{b}-{g}", hydration(a, b, g))
                    for a, b, g in ((1, 2, 3), (2, 2, 2), (3, 2, 1))
                ),
            ),
        ),
        replace(
            base,
            name="water-ratio",
            description="42 g DM with 50/60/66% water, drunk water only",
            water=WaterSources(K_feed=0.0, K_sec=0.0, W_drink=water_pct_to_drink(60.0)),
            sweep=Sweep(
                "water_pct",
                tuple(
                    SweepPoint(p, {"water.W_drink": water_pct_to_drink(p)}) for p in (50.0, 60.0, 66.0)
                ),
            ),
        ),
    ]


def get_builtin(name: str) -> ScenarioConfig:
    if name == "baseline":
        return baseline_scenario()
    for scenario in builtin_scenarios():
        if scenario.name == name:
            return scenario
    raise ValidationError(f"unknown scenario: {name}")


def time_to_water_ratio(run: IntegrationResult, target: float = 0.1, tol: float = 0.01) -> float | None:
    """First recorded time at which W/M lies within ``target ± tol``."""
    for rec in run.trajectory:
        if abs(rec.W_ratio - target) <= tol:
            return rec.t
    return None
