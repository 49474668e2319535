"""Run configuration and cost tables, in a flat TOML-compatible subset.

Supported syntax: `[section]` headers, `key = value` pairs, `#` comments,
blank lines. Values: double-quoted strings, integers, floats (scientific
notation fine), true/false, and flat two-element arrays `[a, b]` for cost
entries. That subset keeps the files hand-editable and trivially parseable;
anything fancier is rejected with the byte offset of the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dram import PnsOrganization
from .errors import FormatError
from .perf import CostEntry, CostTable, default_cost_table
from .sensor import SensorConfig
from .variation import VariationModel


def _parse_value(raw: str, offset: int):
    raw = raw.strip()
    if raw.startswith('"'):
        if not (raw.endswith('"') and len(raw) >= 2):
            raise FormatError("unterminated string", offset=offset)
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    if raw.startswith("["):
        if not raw.endswith("]"):
            raise FormatError("unterminated array", offset=offset)
        items = [x.strip() for x in raw[1:-1].split(",") if x.strip()]
        return [_parse_value(x, offset) for x in items]
    try:
        if any(c in raw for c in ".eE") and not raw.lstrip("+-").isdigit():
            return float(raw)
        return int(raw)
    except ValueError:
        raise FormatError("cannot parse value %r" % raw, offset=offset) from None


def parse_flat_toml(text: str) -> dict:
    """-> {section: {key: value}}; top-level keys land in section ''."""
    out = {"": {}}
    section = ""
    offset = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if "#" in stripped and not stripped.startswith('"'):
            quote = False
            for i, c in enumerate(stripped):
                if c == '"':
                    quote = not quote
                elif c == "#" and not quote:
                    stripped = stripped[:i].strip()
                    break
        if not stripped:
            offset += len(line)
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise FormatError("bad section header", offset=offset)
            section = stripped[1:-1].strip()
            out.setdefault(section, {})
        else:
            if "=" not in stripped:
                raise FormatError("expected key = value", offset=offset)
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if not key:
                raise FormatError("empty key", offset=offset)
            out[section][key] = _parse_value(raw, offset)
        offset += len(line)
    return out


@dataclass
class RunConfig:
    """Everything the CLI needs to assemble a system."""

    sensor_m: int = 28
    sensor_n: int = 28
    v: int = 256
    adc_bits: int = 8
    clock_period: float = 100e-6
    exposure_time: float = 0.9e-3
    v_dd: float = 1.2
    unit_current: float = 1e-6
    organization: PnsOrganization = field(default_factory=PnsOrganization)
    variation: VariationModel = field(default_factory=VariationModel)
    platform: str = "pisa-pns-ii"
    substrate: str = "functional"
    wi: int = 4
    cost_table_path: str = None

    def sensor_config(self) -> SensorConfig:
        return SensorConfig(
            adc_bits=self.adc_bits,
            clock_period=self.clock_period,
            exposure_time=self.exposure_time,
        )

    def cost_table(self) -> CostTable:
        if self.cost_table_path:
            return load_cost_table(self.cost_table_path)
        return default_cost_table()


_SENSOR_KEYS = {"m": "sensor_m", "n": "sensor_n", "v": "v", "adc_bits": "adc_bits",
                "clock_period": "clock_period", "exposure_time": "exposure_time",
                "v_dd": "v_dd", "unit_current": "unit_current"}
_RUN_KEYS = {"platform": "platform", "substrate": "substrate", "wi": "wi",
             "cost_table": "cost_table_path"}
_PNS_KEYS = ("rows_per_subarray", "cols", "mats", "banks")
_VARIATION_KEYS = ("sigma_pixel", "sigma_cbl", "sigma_nvm_ra", "sigma_tmr",
                   "sigma_dram", "seed")


def _require_known(section, keys, allowed):
    for key in keys:
        if key not in allowed:
            raise FormatError("unknown key %r in section [%s]" % (key, section))


def config_from_mapping(doc: dict) -> RunConfig:
    cfg = RunConfig()
    known_sections = {"", "sensor", "pns", "run", "variation"}
    for section in doc:
        if section not in known_sections:
            raise FormatError("unknown section [%s]" % section)
    if doc.get(""):
        raise FormatError("top-level keys not allowed; use a section")

    sensor = doc.get("sensor", {})
    _require_known("sensor", sensor, _SENSOR_KEYS)
    for key, attr in _SENSOR_KEYS.items():
        if key in sensor:
            setattr(cfg, attr, sensor[key])

    run = doc.get("run", {})
    _require_known("run", run, _RUN_KEYS)
    for key, attr in _RUN_KEYS.items():
        if key in run:
            setattr(cfg, attr, run[key])

    pns = doc.get("pns", {})
    _require_known("pns", pns, _PNS_KEYS)
    if pns:
        base = PnsOrganization()
        cfg.organization = PnsOrganization(
            rows_per_subarray=pns.get("rows_per_subarray", base.rows_per_subarray),
            cols=pns.get("cols", base.cols),
            mats=tuple(pns.get("mats", base.mats)),
            banks=tuple(pns.get("banks", base.banks)),
        )

    var = doc.get("variation", {})
    _require_known("variation", var, _VARIATION_KEYS)
    if var:
        cfg.variation = VariationModel(**var)

    for name in ("sensor_m", "sensor_n", "v", "adc_bits", "wi"):
        if int(getattr(cfg, name)) < 1:
            raise FormatError("%s must be positive" % name)
    if not 1 <= cfg.adc_bits <= 16:
        raise FormatError("adc_bits must be in 1..16")
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_mapping(parse_flat_toml(fh.read()))


def load_cost_table(path) -> CostTable:
    with open(path, "r", encoding="utf-8") as fh:
        doc = parse_flat_toml(fh.read())
    for section in doc:
        if section not in ("", "entries"):
            raise FormatError("unknown section [%s] in cost table" % section)
    top = doc.get("", {})
    for key in top:
        if key not in ("sensing_standby_w", "processing_standby_w"):
            raise FormatError("unknown cost-table key %r" % key)
    entries = {}
    for name, val in doc.get("entries", {}).items():
        if not (isinstance(val, list) and len(val) == 2):
            raise FormatError("entry %r must be [energy_j, latency_s]" % name)
        entries[name] = CostEntry(float(val[0]), float(val[1]))
    if not entries:
        raise FormatError("cost table has no [entries]")
    try:
        return CostTable(
            entries=entries,
            sensing_standby_w=float(top.get("sensing_standby_w", 0.0)),
            processing_standby_w=float(top.get("processing_standby_w", 0.0)),
        )
    except ValueError as e:
        raise FormatError(str(e)) from None


def save_cost_table(table: CostTable, path):
    """Write a table back out in the same subset (round-trips exactly)."""
    lines = ["sensing_standby_w = %r" % table.sensing_standby_w,
             "processing_standby_w = %r" % table.processing_standby_w,
             "", "[entries]"]
    for name in sorted(table.entries):
        e = table.entries[name]
        lines.append("%s = [%r, %r]" % (name, e.energy, e.latency))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
