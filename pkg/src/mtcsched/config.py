"""Scenario files: INI-style ``key = value`` text with ``[section]`` blocks.

Keys may also be written fully qualified before any section header, as in
``cell.inner_m = 50``. Keys ending in ``_db`` or ``_dbw`` are converted to
linear scale while parsing; the rest of the package never sees decibels.

Example::

    [scenario]
    seed = 7
    payload_bits = 1000

    [radio]
    noise_dbw = -121

    [underlay]
    delta = 3.76
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Tuple

from .core import db_to_linear, default_radio
from .harness import Scenario
from .interference import UnderlayScenario
from .lte import LteConfig

__all__ = ["ConfigError", "ScenarioFile", "parse_scenario", "load_scenario"]

ROOT = "__root__"


class ConfigError(ValueError):
    """Malformed or invalid scenario file; the message names line and field."""


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario = field(default_factory=Scenario)
    underlay: UnderlayScenario = field(default_factory=UnderlayScenario)
    group_size: int = 2


def _int(text: str) -> int:
    return int(text, 10)


# (section, key) -> (target object, attribute, converter)
_FIELDS: Dict[Tuple[str, str], Tuple[str, str, Callable[[str], object]]] = {
    ("scenario", "seed"): ("scenario", "seed", _int),
    ("scenario", "nodes"): ("scenario", "node_count", _int),
    ("scenario", "trials"): ("scenario", "trials", _int),
    ("scenario", "payload_bits"): ("scenario", "payload", float),
    ("scenario", "period_s"): ("scenario", "period", float),
    ("scenario", "static_energy_j"): ("scenario", "static_energy", float),
    ("scenario", "battery_j"): ("scenario", "battery_capacity", float),
    ("cell", "inner_m"): ("scenario", "inner", float),
    ("cell", "outer_m"): ("scenario", "outer", float),
    ("radio", "bandwidth_hz"): ("radio", "bandwidth", float),
    ("radio", "element_duration_s"): ("radio", "element_duration", float),
    ("radio", "noise_dbw"): ("radio", "noise", float),
    ("radio", "p_max_w"): ("radio", "p_max", float),
    ("radio", "circuit_power_w"): ("radio", "circuit_power", float),
    ("radio", "pa_inefficiency"): ("radio", "pa_inefficiency", float),
    ("radio", "snr_gap_db"): ("radio", "snr_gap", float),
    ("grouping", "beta"): ("grouping", "beta", float),
    ("grouping", "n_max"): ("grouping", "n_max", _int),
    ("grouping", "xi"): ("grouping", "listen_ratio", float),
    ("grouping", "attach_range_m"): ("grouping", "attach_range", float),
    ("grouping", "group_size"): ("file", "group_size", _int),
    ("lte", "compensation"): ("lte", "compensation", float),
    ("lte", "symbols_per_prbp"): ("lte", "symbols_per_prbp", _int),
    ("lte", "noise_per_block_dbw"): ("lte", "noise_per_block", float),
    ("lte", "target_snr_db"): ("lte", "target_snr", float),
    ("lte", "tti_s"): ("lte", "tti", float),
    ("lte", "p_max_dbw"): ("lte", "p_max", float),
    ("lte", "circuit_power_w"): ("lte", "circuit_power", float),
    ("lte", "pa_inefficiency"): ("lte", "pa_inefficiency", float),
    ("underlay", "pu_distance_m"): ("underlay", "pu_distance", float),
    ("underlay", "pu_power_w"): ("underlay", "pu_power", float),
    ("underlay", "sinr_threshold_db"): ("underlay", "sinr_threshold", float),
    ("underlay", "noise_dbw"): ("underlay", "noise", float),
    ("underlay", "pathloss_const"): ("underlay", "pathloss_const", float),
    ("underlay", "delta"): ("underlay", "exponent", float),
    ("underlay", "groups"): ("underlay", "groups", _int),
    ("underlay", "group_radius_m"): ("underlay", "group_radius", float),
    ("underlay", "delta_m"): ("underlay", "intra_exponent", float),
    ("underlay", "c_m"): ("underlay", "intra_const", float),
    ("underlay", "edge_rx_power_dbw"): ("underlay", "edge_rx_power", float),
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s]+)\s*[=:]")


def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    lines: Dict[Tuple[str, str], int] = {}
    section = ROOT
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = _KEY_RE.match(line)
        if m:
            key = m.group(1).lower()
            if section == ROOT and "." in key:
                sec, key = key.split(".", 1)
                lines[(sec, key)] = no
            else:
                lines[(section, key)] = no
    return lines


def _read(text: str) -> Dict[Tuple[str, str], str]:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__",
                                       inline_comment_prefixes=("#",))
    try:
        parser.read_string(f"[{ROOT}]\n" + text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"line {exc.lineno - 1}: duplicate key {exc.section}.{exc.option}") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"line {exc.lineno - 1}: duplicate section [{exc.section}]") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"line {lineno - 1}: cannot parse {line!r}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    entries: Dict[Tuple[str, str], str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if section == ROOT:
                if "." not in key:
                    raise ConfigError(f"key {key!r} outside a section must be written as section.key")
                sec, key = key.split(".", 1)
            else:
                sec = section.lower()
            if (sec, key) in entries:
                raise ConfigError(f"duplicate key {sec}.{key}")
            entries[(sec, key)] = value.strip()
    return entries


def parse_scenario(text: str) -> ScenarioFile:
    """Build typed configs from scenario text; defaults fill missing keys."""
    lines = _line_index(text)
    values: Dict[str, Dict[str, object]] = {t: {} for t in ("scenario", "radio", "grouping", "lte", "underlay", "file")}
    keys_for: Dict[Tuple[str, str], str] = {}
    for (sec, key), raw in _read(text).items():
        where = f"line {lines.get((sec, key), '?')}: {sec}.{key}"
        if (sec, key) not in _FIELDS:
            raise ConfigError(f"{where}: unknown field")
        target, attr, conv = _FIELDS[(sec, key)]
        try:
            value = conv(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected {'an integer' if conv is _int else 'a number'}, got {raw!r}") from None
        if key.endswith("_db") or key.endswith("_dbw"):
            value = db_to_linear(value)
        values[target][attr] = value
        keys_for[(target, attr)] = where
    return _build(values, keys_for)


def _build(values, keys_for) -> ScenarioFile:
    def make(target: str, fn):
        try:
            return fn()
        except ValueError as exc:
            msg = str(exc)
            for (t, attr), where in keys_for.items():
                if t == target and re.search(rf"\b{attr}\b", msg):
                    raise ConfigError(f"{where}: {msg}") from None
            raise ConfigError(f"[{target}] {msg}") from None

    radio_vals = dict(values["radio"])
    if "noise" in radio_vals:
        bw = radio_vals.get("bandwidth", default_radio().bandwidth)
        radio_vals["noise_psd"] = radio_vals.pop("noise") / bw
        keys_for[("radio", "noise_psd")] = keys_for.pop(("radio", "noise"))
    radio = make("radio", lambda: default_radio(**radio_vals))
    grouping = make("grouping", lambda: replace(Scenario().grouping, **values["grouping"]))
    lte = make("lte", lambda: LteConfig(**values["lte"]))
    scenario = make("scenario", lambda: Scenario(radio=radio, grouping=grouping, lte=lte, **values["scenario"]))
    underlay_vals = dict(values["underlay"])
    underlay_vals.setdefault("inner", scenario.inner)
    underlay_vals.setdefault("outer", scenario.outer)
    underlay = make("underlay", lambda: UnderlayScenario(**underlay_vals))
    group_size = values["file"].get("group_size", 2)
    if group_size < 0:
        raise ConfigError(f"{keys_for[('file', 'group_size')]}: must be >= 0")
    return ScenarioFile(scenario, underlay, group_size)


def load_scenario(path) -> ScenarioFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc.strerror}") from None
    return parse_scenario(text)
