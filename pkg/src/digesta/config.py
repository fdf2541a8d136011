"""Configuration files.

The format is YAML with three optional top-level sections::

    params:
      hydration: {alpha: 1.0, beta: 1.0, gamma: 1.0, lambda_s: 5.0, lambda_i: 5.0}
      reactions:
        k_vol: {peak: 1.0, x_on: 1.0, w_on: 0.2, x_off: 13.6, w_off: 1.0}
        k_surf: 0.1
      transport: {tau: 10.0}
    integrator: {method: rk4, dt: 0.001}
    scenarios:
      - name: insoluble-dose          # a built-in name starts from that scenario
      - name: my-run
        composition: {dry_matter: 42, A_s: 50, A_ns: 30}
        water: {W_drink: 60}
        sweep: {param: params.transport.tau, values: [5, 10, 20]}

Any key may be written in dotted form instead of nesting
(``params.transport.tau: 10``); the run manifest uses that flat form so it can
be read back as a configuration.  Unknown keys are rejected.  Without a
``scenarios`` section every built-in scenario is selected.
"""

from __future__ import annotations

import math
from dataclasses import asdict, fields, replace
from typing import NamedTuple

import yaml

from digesta.core import PARAM_GROUPS, ModelParams, Profile, Secretion
from digesta.errors import ParseError, UnknownParameter, ValidationError
from digesta.integrator import IntegrationConfig
from digesta.scenarios import (
    SUMMARY_FIELDS,
    Composition,
    ScenarioConfig,
    Sweep,
    SweepPoint,
    WaterSources,
    apply_overrides,
    baseline_scenario,
    builtin_scenarios,
)

TOP_LEVEL = ("params", "integrator", "scenarios", "manifest")


class RunConfig(NamedTuple):
    params: ModelParams
    scenarios: list[ScenarioConfig]
    integration: IntegrationConfig


def _load(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        if mark is not None:
            raise ParseError(problem, mark.line + 1, mark.column + 1) from None
        raise ParseError(problem) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParseError("top level must be a mapping of sections")
    return _expand(data, "")


def _expand(tree: dict, prefix: str) -> dict:
    """Turn ``{"a.b": 1}`` into ``{"a": {"b": 1}}`` at every level."""
    out: dict = {}
    for key, value in tree.items():
        if not isinstance(key, str):
            raise ParseError(f"key {key!r} under '{prefix or '<root>'}' is not a string")
        head, *rest = key.split(".")
        node = {".".join(rest): value} if rest else value
        if isinstance(node, dict):
            node = _expand(node, f"{prefix}{head}.")
        if head in out:
            if isinstance(out[head], dict) and isinstance(node, dict):
                out[head] = _merge(out[head], node, f"{prefix}{head}")
            else:
                raise ParseError(f"duplicate key '{prefix}{head}'")
        else:
            out[head] = node
    return out


def _merge(a: dict, b: dict, where: str) -> dict:
    merged = dict(a)
    for key, value in b.items():
        if key in merged:
            if isinstance(merged[key], dict) and isinstance(value, dict):
                merged[key] = _merge(merged[key], value, f"{where}.{key}")
            else:
                raise ParseError(f"duplicate key '{where}.{key}'")
        else:
            merged[key] = value
    return merged


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{where} must be finite")
    return value


def _section(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ValidationError(f"{where} must be a mapping")
    return value


def _reject_unknown(mapping: dict, allowed, where: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _parse_params(tree: dict) -> ModelParams:
    tree = _section(tree, "params")
    _reject_unknown(tree, PARAM_GROUPS, "params")
    kwargs: dict = {}
    for group, body in tree.items():
        body = _section(body, f"params.{group}")
        if group == "secretion":
            names = [f.name for f in fields(Secretion)]
            _reject_unknown(body, names, "params.secretion")
            sec = {k: (str(v) if k == "target" else _number(v, f"params.secretion.{k}")) for k, v in body.items()}
            kwargs["secretion"] = Secretion(**sec)
            continue
        _reject_unknown(body, PARAM_GROUPS[group], f"params.{group}")
        for name, value in body.items():
            where = f"params.{group}.{name}"
            if name in ("k_vol", "ph"):
                value = _section(value, where)
                _reject_unknown(value, [f.name for f in fields(Profile)], where)
                base = getattr(ModelParams, "__dataclass_fields__")[name].default_factory()
                kwargs[name] = replace(base, **{k: _number(v, f"{where}.{k}") for k, v in value.items()})
            else:
                kwargs[name] = _number(value, where)
    return ModelParams(**kwargs)


def _parse_integrator(tree) -> IntegrationConfig:
    tree = _section(tree, "integrator")
    names = [f.name for f in fields(IntegrationConfig)]
    _reject_unknown(tree, names, "integrator")
    kwargs = {}
    for key, value in tree.items():
        where = f"integrator.{key}"
        if key == "method":
            kwargs[key] = str(value)
        elif key in ("audit_every", "max_steps"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(f"{where} must be an integer")
            kwargs[key] = value
        elif key == "L" and value is None:
            kwargs[key] = None
        else:
            kwargs[key] = _number(value, where)
    return IntegrationConfig(**kwargs)


_SCENARIO_KEYS = ("name", "description", "composition", "water", "initial", "overrides", "sweep", "outputs")


def _parse_scenario(tree, index: int, params: ModelParams) -> ScenarioConfig:
    where = f"scenarios[{index}]"
    tree = _section(tree, where)
    _reject_unknown(tree, _SCENARIO_KEYS, where)
    name = tree.get("name")
    if not isinstance(name, str) or not name:
        raise ValidationError(f"{where}.name is required")
    builtins = {s.name: s for s in builtin_scenarios()}
    scenario = builtins.get(name, replace(baseline_scenario(), name=name, description=""))
    where = f"scenario '{name}'"

    if "description" in tree:
        scenario = replace(scenario, description=str(tree["description"]))
    if "composition" in tree:
        body = _section(tree["composition"], f"{where}.composition")
        _reject_unknown(body, [f.name for f in fields(Composition)], f"{where}.composition")
        comp = {k: _number(v, f"composition.{k}") for k, v in body.items()}
        scenario = replace(scenario, composition=replace(scenario.composition, **comp))
    if "water" in tree:
        body = _section(tree["water"], f"{where}.water")
        _reject_unknown(body, [f.name for f in fields(WaterSources)], f"{where}.water")
        water = {k: (None if v is None else _number(v, f"water.{k}")) for k, v in body.items()}
        scenario = replace(scenario, water=replace(scenario.water, **water))
    if "initial" in tree:
        body = _section(tree["initial"], f"{where}.initial")
        _reject_unknown(body, ("e_exo", "x", "v"), f"{where}.initial")
        keys = {"e_exo": "e_exo", "x": "x0", "v": "v0"}
        scenario = replace(scenario, **{keys[k]: _number(v, f"initial.{k}") for k, v in body.items()})
    if "overrides" in tree:
        body = _flatten(_section(tree["overrides"], f"{where}.overrides"))
        scenario = replace(scenario, overrides={k: _scalar(v, k) for k, v in body.items()})
    if "sweep" in tree:
        scenario = replace(scenario, sweep=_parse_sweep(tree["sweep"], where))
    if "outputs" in tree:
        outputs = tree["outputs"]
        if not isinstance(outputs, list):
            raise ValidationError(f"{where}.outputs must be a list")
        scenario = replace(scenario, outputs=tuple(str(o) for o in outputs))
    scenario.validate()
    try:
        apply_overrides(scenario, params, scenario.overrides)
        for point in scenario.sweep.points if scenario.sweep else ():
            apply_overrides(scenario, params, point.set)
    except UnknownParameter as exc:
        raise ValidationError(f"{where}: {exc}") from None
    return scenario


def _scalar(value, where: str):
    if isinstance(value, str):
        return value
    return _number(value, where)


def _parse_sweep(tree, where: str) -> Sweep | None:
    if tree is None:
        return None
    tree = _section(tree, f"{where}.sweep")
    if "param" in tree:
        _reject_unknown(tree, ("param", "values", "axis"), f"{where}.sweep")
        values = tree.get("values", [])
        if not isinstance(values, list):
            raise ValidationError(f"{where}.sweep.values must be a list")
        path = str(tree["param"])
        return Sweep.over(path, [_number(v, f"{where}.sweep.values") for v in values], axis=tree.get("axis"))
    _reject_unknown(tree, ("axis", "points"), f"{where}.sweep")
    if "axis" not in tree:
        raise ValidationError(f"{where}.sweep needs 'param' or 'axis'")
    points = []
    for i, point in enumerate(tree.get("points") or []):
        point = _section(point, f"{where}.sweep.points[{i}]")
        _reject_unknown(point, ("value", "set"), f"{where}.sweep.points[{i}]")
        settings = _flatten(_section(point.get("set"), f"{where}.sweep.points[{i}].set"))
        points.append(
            SweepPoint(
                _scalar(point.get("value", i), f"{where}.sweep.points[{i}].value"),
                {k: _scalar(v, k) for k, v in settings.items()},
            )
        )
    return Sweep(axis=str(tree["axis"]), points=tuple(points))


def _flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, path + "."))
        else:
            out[path] = value
    return out


def parse_config(text: str) -> RunConfig:
    """Parse configuration text into fully resolved parameters, scenarios and integrator settings."""
    tree = _load(text)
    _reject_unknown(tree, TOP_LEVEL, "configuration")
    params = _parse_params(tree.get("params"))
    integration = _parse_integrator(tree.get("integrator"))
    if "scenarios" in tree and tree["scenarios"] is not None:
        entries = tree["scenarios"]
        if not isinstance(entries, list):
            raise ValidationError("scenarios must be a list")
        scenarios = [_parse_scenario(entry, i, params) for i, entry in enumerate(entries)]
    else:
        scenarios = builtin_scenarios()
    return RunConfig(params, scenarios, integration)


def scenario_to_tree(scenario: ScenarioConfig) -> dict:
    tree = {
        "name": scenario.name,
        "description": scenario.description,
        "composition": asdict(scenario.composition),
        "water": asdict(scenario.water),
        "initial": {"e_exo": scenario.e_exo, "x": scenario.x0, "v": scenario.v0},
        "overrides": dict(scenario.overrides),
        "outputs": list(scenario.outputs),
    }
    if scenario.sweep is not None:
        tree["sweep"] = {
            "axis": scenario.sweep.axis,
            "points": [{"value": p.value, "set": dict(p.set)} for p in scenario.sweep.points],
        }
    return tree


def config_to_tree(config: RunConfig) -> dict:
    integration = asdict(config.integration)
    return {
        "params": config.params.to_tree(),
        "integrator": integration,
        "scenarios": [scenario_to_tree(s) for s in config.scenarios],
    }


def dump_config(config: RunConfig) -> str:
    """Serialize to nested YAML; ``parse_config(dump_config(c))`` reproduces ``c``."""
    return yaml.safe_dump(config_to_tree(config), sort_keys=False, width=100)


def flat_lines(tree: dict, prefix: str = "") -> list[str]:
    """One ``dotted.key: value`` line per leaf; lists are written in flow style."""
    lines = []
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict) and value:
            lines.extend(flat_lines(value, path + "."))
        else:
            rendered = yaml.safe_dump(value, default_flow_style=True, width=float("inf"))
            rendered = rendered.strip()
            if rendered.endswith("\n..."):
                rendered = rendered[: -len("\n...")]
            if rendered.endswith("..."):
                rendered = rendered[: -len("...")].strip()
            lines.append(f"{path}: {rendered}")
    return lines
