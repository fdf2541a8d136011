"""State representation, parameters and algebraic derived quantities.

Masses are in grams, time in hours and positions in intestine length units
(the small intestine spans ``[0, L]`` with ``L = 17``).  Water density is 1,
so volumes are numerically grams of water.

Every substrate pool carries its dry mass as state; the water bound to it is
a fixed multiple of that dry mass and is reconstructed algebraically.  Only
the *available* water ``W`` is a state variable of its own.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

from digesta.errors import DegenerateBolus, UnknownParameter, ValidationError

# Order of the integrated state vector; ``t`` is carried separately.
STATE_FIELDS = (
    "x",
    "v",
    "A_nd",
    "A_ns",
    "A_s_dm",
    "B_int_dm",
    "B_abs_dm",
    "F_sol_dm",
    "F_insol_dm",
    "W",
    "e_exo",
    "absorbed_dm",
    "absorbed_water",
    "secreted_dm",
)
DRY_FIELDS = ("A_nd", "A_ns", "A_s_dm", "B_int_dm", "B_abs_dm", "F_sol_dm", "F_insol_dm")
# Pools that must stay nonnegative; absorbed_water is a signed net flow.
NONNEGATIVE_FIELDS = DRY_FIELDS + ("W", "e_exo", "absorbed_dm", "secreted_dm")
INDEX = {name: i for i, name in enumerate(STATE_FIELDS)}


@dataclass(frozen=True)
class BolusState:
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
    t: float = 0.0

    def as_list(self) -> list[float]:
        return [getattr(self, name) for name in STATE_FIELDS]

    @classmethod
    def from_list(cls, values, t: float = 0.0) -> "BolusState":
        return cls(*(float(v) for v in values), t=float(t))

    @property
    def dry_matter(self) -> float:
        return sum(getattr(self, name) for name in DRY_FIELDS)

    def negative_pools(self, threshold: float = 0.0) -> list[str]:
        return [name for name in NONNEGATIVE_FIELDS if getattr(self, name) < -threshold]


@dataclass(frozen=True)
class Profile:
    """Smooth plateau along the intestine: a rising and a falling logistic ramp.

    ``value(x) = peak * s((x - x_on) / w_on) * s((x_off - x) / w_off)``
    where ``s`` is the logistic function.
    """

    peak: float = 1.0
    x_on: float = 1.0
    w_on: float = 0.2
    x_off: float = 13.6
    w_off: float = 1.0

    def __call__(self, x: float) -> float:
        rise = 0.5 * (1.0 + math.tanh(0.5 * (x - self.x_on) / self.w_on))
        fall = 0.5 * (1.0 + math.tanh(0.5 * (self.x_off - x) / self.w_off))
        return self.peak * rise * fall

    def validate(self, name: str) -> None:
        if self.peak < 0:
            raise ValidationError(f"{name}.peak must be ≥ 0")
        if self.w_on <= 0 or self.w_off <= 0:
            raise ValidationError(f"{name}.w_on and {name}.w_off must be > 0")


@dataclass(frozen=True)
class Secretion:
    """Constant-rate pancreatic/biliary input over a position window.

    The secreted dry matter enters ``target`` ("B_int" or "A_s") together with
    its own bound water; it never adds available water.
    """

    rate: float = 0.0
    x_start: float = 1.0
    x_end: float = 3.0
    target: str = "B_int"

    def at(self, x: float) -> float:
        if self.rate and self.x_start <= x <= self.x_end:
            return self.rate
        return 0.0

    def validate(self) -> None:
        if self.rate < 0:
            raise ValidationError("secretion.rate must be ≥ 0")
        if self.x_end < self.x_start:
            raise ValidationError("secretion.x_end must be ≥ secretion.x_start")
        if self.target not in ("B_int", "A_s"):
            raise ValidationError("secretion.target must be 'B_int' or 'A_s'")


# Section layout used by the configuration file and dotted parameter paths.
PARAM_GROUPS: dict[str, tuple[str, ...]] = {
    "hydration": ("alpha", "beta", "gamma", "lambda_s", "lambda_i"),
    "reactions": (
        "k_vol",
        "k_surf",
        "k_surf_tilde",
        "k_equi",
        "mu_max",
        "K_mu",
        "k_abs",
        "k_s",
        "k_e",
        "ph",
    ),
    "water": ("k_w", "w_target", "K_feed", "K_sec", "rho_w"),
    "transport": ("tau", "c", "c0", "c1", "a", "b", "K_visco", "ell", "L", "eps_W"),
    "secretion": ("secretion",),
}

_NONNEGATIVE_PARAMS = (
    "alpha",
    "beta",
    "gamma",
    "lambda_s",
    "lambda_i",
    "k_surf",
    "k_surf_tilde",
    "k_equi",
    "mu_max",
    "k_abs",
    "k_s",
    "k_e",
    "k_w",
    "K_feed",
    "K_sec",
    "tau",
    "c0",
    "c1",
    "b",
    "K_visco",
)


@dataclass(frozen=True)
class ModelParams:
    """All model constants.  Defaults are the committed calibration."""

    # water bound per gram of dry A_s, B_int, B_abs, soluble and insoluble fibre
    alpha: float = 0.9711
    beta: float = 0.9711
    gamma: float = 0.9711
    lambda_s: float = 1.257
    lambda_i: float = 0.3444

    k_vol: Profile = field(default_factory=lambda: Profile(peak=0.01132))
    k_surf: float = 2.425
    k_surf_tilde: float = 66.06
    k_equi: float = 19.8
    mu_max: float = 2.086
    K_mu: float = 0.5203
    k_abs: float = 1.053
    k_s: float = 0.5
    k_e: float = 0.5
    ph: Profile = field(default_factory=Profile)

    k_w: float = 1.982
    w_target: float = 0.1
    K_feed: float = 0.12
    K_sec: float = 0.38
    rho_w: float = 1.0

    tau: float = 17.88
    c: float = 1000.0
    c0: float = 0.1954
    c1: float = 1.0
    a: float = 1.0
    b: float = 0.004871
    K_visco: float = 1.0
    ell: float = 10.0
    L: float = 17.0
    eps_W: float = 1e-6

    secretion: Secretion = field(default_factory=Secretion)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in _NONNEGATIVE_PARAMS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite")
            if value < 0:
                raise ValidationError(f"{name} must be ≥ 0")
        if not self.c > 0:
            raise ValidationError("c must be > 0")
        if not self.a > 0:
            raise ValidationError("a must be > 0")
        if not self.ell > 0:
            raise ValidationError("ell must be > 0")
        if not self.L > 0:
            raise ValidationError("L must be > 0")
        if not self.K_mu > 0:
            raise ValidationError("K_mu must be > 0")
        if not self.rho_w > 0:
            raise ValidationError("rho_w must be > 0")
        if not self.eps_W > 0:
            raise ValidationError("eps_W must be > 0")
        if not 0.0 < self.w_target < 1.0:
            raise ValidationError("w_target must be in (0, 1)")
        self.k_vol.validate("k_vol")
        self.ph.validate("ph")
        self.secretion.validate()
        grid = [i / 99 for i in range(100)]
        values = [mu(cw, self) for cw in grid]
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValidationError("mu must be nondecreasing on [0, 1]")

    def to_tree(self) -> dict:
        """Nested dict keyed by config section."""
        tree: dict = {}
        for group, names in PARAM_GROUPS.items():
            if group == "secretion":
                tree[group] = asdict(self.secretion)
                continue
            section = {}
            for name in names:
                value = getattr(self, name)
                section[name] = asdict(value) if isinstance(value, Profile) else value
            tree[group] = section
        return tree

    def with_path(self, path: str, value) -> "ModelParams":
        """Return a copy with one dotted-path field replaced.

        Accepts ``params.transport.tau``, ``transport.tau`` or plain ``tau``;
        profile and secretion members use e.g. ``reactions.k_vol.peak``.
        """
        name, sub = _resolve(path)
        if sub is None:
            return replace(self, **{name: float(value)})
        current = getattr(self, name)
        cast = str if sub == "target" else float
        return replace(self, **{name: replace(current, **{sub: cast(value)})})

    def get_path(self, path: str):
        name, sub = _resolve(path)
        value = getattr(self, name)
        return value if sub is None else getattr(value, sub)


_FIELD_NAMES = {f.name for f in fields(ModelParams)}
_COMPOSITE = {"k_vol": Profile, "ph": Profile, "secretion": Secretion}


def _resolve(path: str) -> tuple[str, str | None]:
    parts = path.split(".")
    if parts[0] == "params":
        parts = parts[1:]
    if len(parts) > 1 and parts[0] in PARAM_GROUPS and parts[0] != "secretion":
        group = parts.pop(0)
        if parts[0] not in PARAM_GROUPS[group]:
            raise UnknownParameter(f"unknown parameter: {path}")
    if not parts or parts[0] not in _FIELD_NAMES:
        raise UnknownParameter(f"unknown parameter: {path}")
    name, rest = parts[0], parts[1:]
    if name in _COMPOSITE:
        members = {f.name for f in fields(_COMPOSITE[name])}
        if len(rest) != 1 or rest[0] not in members:
            raise UnknownParameter(f"unknown parameter: {path}")
        return name, rest[0]
    if rest:
        raise UnknownParameter(f"unknown parameter: {path}")
    return name, None


@dataclass(frozen=True)
class DerivedQuantities:
    W_s: float
    W_int: float
    W_abs: float
    W_sol: float
    W_insol: float
    W_tot: float
    DM: float
    M: float
    V: float
    V_app: float
    r: float
    r_sol: float
    S: float
    S_sol: float
    # M - F_insol: the bolus mass reachable by substrates
    accessible_mass: float
    conc_A_s: float
    conc_B_int: float
    conc_B_abs: float
    conc_A_ns: float
    conc_A_nd: float
    conc_F_sol: float
    conc_W: float
    W_ratio: float


def compute_derived(state: BolusState, params: ModelParams) -> DerivedQuantities:
    """Algebraic closure of a bolus state (bound water, mass, volume, geometry)."""
    W_s = params.alpha * state.A_s_dm
    W_int = params.beta * state.B_int_dm
    W_abs = params.gamma * state.B_abs_dm
    W_sol = params.lambda_s * state.F_sol_dm
    W_insol = params.lambda_i * state.F_insol_dm
    W_tot = state.W + W_s + W_int + W_abs + W_sol + W_insol
    DM = state.dry_matter
    M = DM + W_tot
    accessible = M - (state.F_insol_dm + W_insol)
    if accessible <= 0:
        raise DegenerateBolus(f"M - F_insol = {accessible:g} ≤ 0")
    if W_tot - W_sol < 0:
        raise DegenerateBolus(f"soluble-fibre water {W_sol:g} exceeds total water {W_tot:g}")
    V = W_tot / params.rho_w
    V_app = (W_tot - W_insol) / params.rho_w
    r = math.sqrt(V / (math.pi * params.ell))
    r_sol = math.sqrt((W_tot - W_sol) / params.rho_w / (math.pi * params.ell))
    return DerivedQuantities(
        W_s=W_s,
        W_int=W_int,
        W_abs=W_abs,
        W_sol=W_sol,
        W_insol=W_insol,
        W_tot=W_tot,
        DM=DM,
        M=M,
        V=V,
        V_app=V_app,
        r=r,
        r_sol=r_sol,
        S=2.0 * math.pi * r * params.ell,
        S_sol=2.0 * math.pi * r_sol * params.ell,
        accessible_mass=accessible,
        conc_A_s=state.A_s_dm / accessible,
        conc_B_int=state.B_int_dm / accessible,
        conc_B_abs=state.B_abs_dm / accessible,
        conc_A_ns=state.A_ns / accessible,
        conc_A_nd=state.A_nd / accessible,
        conc_F_sol=state.F_sol_dm / accessible,
        conc_W=state.W / accessible,
        W_ratio=state.W / M if M > 0 else 0.0,
    )


def mu(conc_W: float, params: ModelParams) -> float:
    """Solubilization equilibrium ratio A_s/A_ns, saturating in available water."""
    return params.mu_max * conc_W / (conc_W + params.K_mu)


def k_vol_at(x: float, params: ModelParams) -> float:
    """Volumic (pancreatic) degradation rate at position ``x``."""
    return params.k_vol(x)


def ph_at(x: float, params: ModelParams) -> float:
    """Relative exogenous-enzyme activity at position ``x``."""
    return params.ph(x)
