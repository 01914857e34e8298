"""Flat key = value scenario files (a TOML subset) and their emitter."""
from __future__ import annotations

import math
import re
from dataclasses import fields
from pathlib import Path

import tomli

from .errors import ConfigError, DomainError
from .finaltests import Sidedness, TestKind
from .mc import ScenarioConfig
from .ssr import FixedRule, KieserFriedeRule, NonInferiorityRule, ThresholdRule
from .trial import DesignKind

__all__ = ["parse_config", "parse_config_text", "emit_config", "config_to_dict", "RULE_KEYS", "SCENARIO_KEYS"]

SCENARIO_KEYS = (
    "scenario_id", "design", "n1", "rule", "mu_true", "sigma", "margin", "final_test",
    "budget", "alpha", "side", "reps", "seed", "critval_method", "critval_draws",
)

# per rule: which flat keys it accepts, and which of those are required
RULE_KEYS = {
    "threshold": (("r_squared", "n2_add"), ("r_squared", "n2_add")),
    "fixed": (("n2",), ("n2",)),
    "kf": (("delta_assumed", "alpha_plan", "beta_plan", "n2_cap", "n2_min", "multiplier"), ("delta_assumed",)),
    "noninferiority": (("theta", "alpha_plan", "beta_plan", "n2_cap", "n2_min", "convention"), ("theta",)),
}
_ALL_RULE_KEYS = {k for keys, _ in RULE_KEYS.values() for k in keys}
_REQUIRED = ("design", "n1", "rule")
_TYPES = {
    "scenario_id": str, "design": str, "rule": str, "final_test": str, "side": str,
    "critval_method": str, "convention": str,
    "n1": int, "budget": int, "reps": int, "seed": int, "critval_draws": int,
    "n2_add": int, "n2": int, "n2_cap": int, "n2_min": int,
}


def _line_of(text: str, key: str):
    m = re.search(rf"^[ \t]*{re.escape(key)}[ \t]*=", text, re.M)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _coerce(key, value, text):
    want = _TYPES.get(key, float)
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string", field=key, line=_line_of(text, key))
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number", field=key, line=_line_of(text, key))
    if want is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key}: expected an integer", field=key, line=_line_of(text, key))
        return int(value)
    return float(value)


def _enum(cls, key, value, text):
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in cls if m is not TestKind.STAGE1_T)
        raise ConfigError(f"{key}: {value!r} is not one of {choices}", field=key, line=_line_of(text, key)) from None


def _build_rule(name, vals, margin, text):
    if name not in RULE_KEYS:
        raise ConfigError(f"rule: unknown rule {name!r} (expected one of {', '.join(RULE_KEYS)})",
                          field="rule", line=_line_of(text, "rule"))
    allowed, required = RULE_KEYS[name]
    for k in vals:
        if k not in allowed:
            raise ConfigError(f"{k}: not a parameter of rule {name!r}", field=k, line=_line_of(text, k))
    for k in required:
        if k not in vals:
            raise ConfigError(f"{k}: required by rule {name!r}", field=k)
    try:
        if name == "threshold":
            return ThresholdRule(vals["r_squared"], vals["n2_add"])
        if name == "fixed":
            return FixedRule(vals["n2"])
        if name == "kf":
            return KieserFriedeRule(**vals)
        return NonInferiorityRule(margin=margin, **vals)
    except DomainError as exc:
        raise ConfigError(f"rule: {exc}", field="rule") from None


def parse_config_text(text: str) -> ScenarioConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"parse error: {exc}", line=int(m.group(1)) if m else None) from None
    for k, v in raw.items():
        if isinstance(v, dict):
            raise ConfigError(f"{k}: tables are not supported, keep the file flat", field=k, line=_line_of(text, k))
        if k not in SCENARIO_KEYS and k not in _ALL_RULE_KEYS:
            raise ConfigError(f"{k}: unknown key", field=k, line=_line_of(text, k))
    for k in _REQUIRED:
        if k not in raw:
            raise ConfigError(f"{k}: missing required key", field=k)
    vals = {k: _coerce(k, v, text) for k, v in raw.items()}

    kw = {k: vals[k] for k in SCENARIO_KEYS if k in vals and k != "rule"}
    kw["design"] = _enum(DesignKind, "design", vals["design"], text)
    if "final_test" in kw:
        kw["final_test"] = _enum(TestKind, "final_test", vals["final_test"], text)
    if "side" in kw:
        kw["side"] = _enum(Sidedness, "side", vals["side"], text)
    rule_vals = {k: v for k, v in vals.items() if k in _ALL_RULE_KEYS}
    kw["rule"] = _build_rule(vals["rule"], rule_vals, kw.get("margin", 0.0), text)
    try:
        return ScenarioConfig(**kw)
    except ConfigError as exc:
        if exc.line is None and exc.field:
            exc.line = _line_of(text, exc.field)
        raise


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    return parse_config_text(text)


def _rule_dict(rule) -> dict:
    if isinstance(rule, ThresholdRule):
        return {"rule": "threshold", "r_squared": rule.r_squared, "n2_add": rule.n2_add}
    if isinstance(rule, FixedRule):
        return {"rule": "fixed", "n2": rule.n2}
    d = {"rule": "kf" if isinstance(rule, KieserFriedeRule) else "noninferiority"}
    for f in fields(rule):
        if f.name == "margin":
            continue  # carried by the scenario-level margin
        v = getattr(rule, f.name)
        if v is not None:
            d[f.name] = v
    return d


def config_to_dict(cfg: ScenarioConfig) -> dict:
    d = {}
    for k in SCENARIO_KEYS:
        if k == "rule":
            d.update(_rule_dict(cfg.rule))
            continue
        v = getattr(cfg, k)
        d[k] = v.value if hasattr(v, "value") else v
    return d


def _fmt(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def emit_config(cfg: ScenarioConfig) -> str:
    """Flat TOML text; ``parse_config_text(emit_config(cfg)) == cfg``."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in config_to_dict(cfg).items())
