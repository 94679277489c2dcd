"""INI run configuration with strict validation.

Each section mirrors one group of domain parameters. Unknown sections and
keys are rejected with the line they appear on, so a typo in a sweep
definition fails loudly instead of silently falling back to a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .materials import ConfigurationError, DispersionModel, NonlinearTensor, PolingSpec, WaveguideGeometry

COMMANDS = ("modes", "census", "match", "spectrum", "scan", "table", "oracle")


class ConfigError(ConfigurationError):
    """Invalid configuration; ``line`` and ``field`` locate the problem when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        super().__init__(message)
        self.line = line
        self.field = field

    def record(self) -> dict:
        return {"message": str(self), "line": self.line, "field": self.field}


def _float(v: str) -> float:
    return float(v)


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(";", ",").split(",") if x.strip())


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(";", ",").split(",") if x.strip())


def _names(v: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in v.replace(";", ",").split(",") if x.strip())


def _choice(*options):
    def parse(v: str) -> str:
        s = v.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "out": (str, None),
        "mesh_resolution": (_float, 0.4),
        "grading": (_float, 2.0),
        "tolerance": (_float, 1e-8),
        "samples": (_int, 7),
        "sh_modes": (_int, 12),
        "cache": (_bool, True),
        "seed": (_int, 0),
        "threads": (_int, 1),
    },
    "geometry": {
        "width_um": (_float, 5.0),
        "depth_um": (_float, 10.0),
        "length_mm": (_float, 10.5),
        "window_um": (_floats, (-15.0, 15.0, -5.0, 40.0)),
    },
    "dispersion": {
        "profile": (_choice("decaying", "printed"), "decaying"),
        "z_increment_from": (_choice("x", "y"), "x"),
    },
    "poling": {
        "period_um": (_float, 7.62),
        "duty_ratio": (_float, 0.5),
        "harmonic_orders": (_ints, (1, 2, 3)),
    },
    "tensor": {
        "d33_pm_per_v": (_float, 10.7),
        "d32_pm_per_v": (_float, 2.65),
    },
    "pump": {
        "center_nm": (_float, 800.0),
        "fwhm_nm": (_float, 10.0),
        "shape": (_choice("gaussian", "flat"), "gaussian"),
        "passband_nm": (_floats, None),
        "points": (_int, 2048),
    },
    "modes": {
        "wavelength_nm": (_float, 800.0),
        "polarizations": (_names, ("TE", "TM")),
        "max_modes": (_int, None),
        "profile_points": (_ints, (101, 136)),
    },
    "census": {
        "wavelengths_nm": (_floats, (800.0, 400.0)),
        "polarizations": (_names, ("TE", "TM")),
    },
    "match": {
        "type": (_choice("II", "0", "I", "all"), "all"),
        "pump_nm": (_float, 800.0),
        "harmonic": (_int, None),
    },
    "spectrum": {
        "lambda_min_nm": (_float, None),
        "lambda_max_nm": (_float, None),
        "points": (_int, 3001),
        "broadening_nm": (_float, 0.0),
        "threshold": (_float, 1e-3),
        "triples": (_names, None),
    },
    "scan": {
        "parameter": (_choice("width", "depth", "period"), "period"),
        "values": (_floats, None),
        "start": (_float, None),
        "stop": (_float, None),
        "num": (_int, 5),
        "triples": (_names, None),
    },
    "table": {
        "pump_fwhm_nm": (_float, 3.0),
        "threshold": (_float, 1e-3),
        "power": (_choice("peak", "integrated"), "peak"),
        "window_nm": (_float, 1.5),
        "points": (_int, 601),
    },
    "oracle": {
        "kind": (_choice("slab", "graded", "marcatili", "autoconvolution", "poling"), "slab"),
        "layers": (str, "5:1.86"),
        "cover_index": (_float, 1.845),
        "substrate_index": (_float, 1.845),
        "wavelength_um": (_float, 0.8),
        "polarization": (_choice("TE", "TM"), "TE"),
        "order": (_int, 0),
        "width_um": (_float, 5.0),
        "height_um": (_float, 5.0),
        "core_index": (_float, 1.86),
        "clad_index": (_float, 1.845),
        "mode": (_ints, (0, 0)),
        "center_nm": (_float, 800.0),
        "fwhm_nm": (_float, 10.0),
        "points": (_int, 801),
        "duty_ratio": (_float, 0.5),
        "orders": (_ints, (1, 2, 3)),
    },
}

# sections a command cannot run without (others fall back to defaults)
REQUIRED = {
    "modes": ("geometry", "modes"),
    "census": ("geometry",),
    "match": ("geometry", "poling"),
    "spectrum": ("geometry", "poling", "pump"),
    "scan": ("geometry", "poling", "scan"),
    "table": ("geometry", "poling"),
    "oracle": ("oracle",),
}


@dataclass
class RunConfig:
    command: str
    sections: dict[str, dict] = field(default_factory=dict)
    present: frozenset = frozenset()
    source: str | None = None

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def section(self, name: str) -> dict:
        return self.sections[name]

    @property
    def geometry(self) -> WaveguideGeometry:
        g = self.sections["geometry"]
        return WaveguideGeometry(g["width_um"], g["depth_um"], g["length_mm"], tuple(g["window_um"]))

    @property
    def dispersion(self) -> DispersionModel:
        d = self.sections["dispersion"]
        return DispersionModel(z_increment_from=d["z_increment_from"], profile=d["profile"])

    @property
    def poling(self) -> PolingSpec:
        p = self.sections["poling"]
        return PolingSpec(p["period_um"], p["duty_ratio"], tuple(p["harmonic_orders"]))

    @property
    def tensor(self) -> NonlinearTensor:
        t = self.sections["tensor"]
        return NonlinearTensor({"d33": t["d33_pm_per_v"], "d32": t["d32_pm_per_v"]})


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line numbers of ``section.key`` entries (configparser does not keep them)."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            out[(section, "")] = no
            continue
        if section is not None and not raw[:1].isspace():
            for sep in ("=", ":"):
                if sep in line:
                    out[(section, line.split(sep, 1)[0].strip().lower())] = no
                    break
    return out


def parse_config(text: str, command: str, source: str | None = None) -> RunConfig:
    """Parse and validate ``text`` for ``command``; raises ConfigError."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}", field="command")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.MissingSectionHeaderError as err:
        raise ConfigError("entry outside any [section]", line=err.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as err:
        raise ConfigError(err.message.splitlines()[0], line=err.lineno) from None
    except configparser.ParsingError as err:
        line = err.errors[0][0] if err.errors else None
        raise ConfigError("unparsable line", line=line) from None
    lines = _key_lines(text)
    present = {s.lower() for s in parser.sections()}
    for sec in parser.sections():
        name = sec.lower()
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", line=lines.get((name, "")), field=sec)
    sections = {}
    for name, keys in SCHEMA.items():
        values = {k: default for k, (_, default) in keys.items()}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in keys:
                    raise ConfigError(f"unknown key {key!r} in [{name}]", line=lines.get((name, key)),
                                      field=f"{name}.{key}")
                try:
                    values[key] = keys[key][0](raw)
                except ValueError as err:
                    raise ConfigError(f"bad value for {name}.{key}: {err}", line=lines.get((name, key)),
                                      field=f"{name}.{key}") from None
        sections[name] = values
    missing = [s for s in REQUIRED[command] if s not in present]
    if missing:
        raise ConfigError(f"command {command!r} needs section(s) {', '.join('[' + m + ']' for m in missing)}",
                          field=missing[0])
    cfg = RunConfig(command, sections, frozenset(present), source)
    _validate(cfg, lines)
    return cfg


def _validate(cfg: RunConfig, lines) -> None:
    def fail(section, key, msg):
        raise ConfigError(msg, line=lines.get((section, key)), field=f"{section}.{key}")

    for sec, key, builder in (("geometry", "width_um", lambda: cfg.geometry),
                              ("dispersion", "profile", lambda: cfg.dispersion),
                              ("poling", "period_um", lambda: cfg.poling)):
        try:
            builder()
        except (ConfigurationError, TypeError, ValueError) as err:
            fail(sec, key, str(err))
    run = cfg.section("run")
    if run["mesh_resolution"] <= 0:
        fail("run", "mesh_resolution", "mesh resolution must be positive")
    if run["threads"] < 1:
        fail("run", "threads", "threads must be >= 1")
    if run["samples"] < 5 or run["samples"] % 2 == 0:
        fail("run", "samples", "samples must be odd and >= 5")
    if not 0 < run["tolerance"] <= 1e-4:
        fail("run", "tolerance", "tolerance must lie in (0, 1e-4]")
    pump = cfg.section("pump")
    if pump["fwhm_nm"] <= 0:
        fail("pump", "fwhm_nm", "pump FWHM must be positive")
    if pump["passband_nm"] is not None and len(pump["passband_nm"]) != 2:
        fail("pump", "passband_nm", "passband needs two wavelengths")
    scan = cfg.section("scan")
    if cfg.command == "scan":
        if scan["values"] is None and (scan["start"] is None or scan["stop"] is None):
            fail("scan", "values", "give either values or start/stop/num")
        if scan["values"] is not None and len(scan["values"]) < 2:
            fail("scan", "values", "a scan needs at least two values")
    if cfg.section("modes")["polarizations"] and any(p not in ("TE", "TM") for p in cfg.section("modes")["polarizations"]):
        fail("modes", "polarizations", "polarizations must be TE and/or TM")
    if any(p not in ("TE", "TM") for p in cfg.section("census")["polarizations"]):
        fail("census", "polarizations", "polarizations must be TE and/or TM")


def load_config(path, command: str) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err.strerror}", field="config") from None
    if not text.strip():
        raise ConfigError("configuration file is empty", line=1)
    return parse_config(text, command, source=str(p))
