"""Command-line front end: ``qpmshg <command> --config <path> [options]``.

Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures. Failures leave a machine-readable ``error.json`` in the output
directory. All result files are written atomically, with fixed float
formatting, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .cache import atomic_write_text
from .config import COMMANDS, ConfigError, RunConfig, load_config
from .eigensolver import EigenSolveError
from .fem import build_mesh
from .materials import ConfigurationError
from .modes import DegenerateModeError, mode_census, render_intensity, solve_modes
from .oracles import (NoGuidedModeError, autoconvolution_spectrum, fft_poling_coefficients, graded_slab_index,
                      marcatili_rect_index, slab_effective_index)
from .scan import (SENSITIVITY_TRIPLES, Device, ModeBank, NotPhaseMatchableError, SolverSettings,
                   allowed_type_ii_triples, find_phase_matched_wavelength, optimal_poling_period, process_table,
                   sensitivity_scan, process_label, triples_by_name)
from .shg import DomainError, PumpSpec, broaden, gaussian_fwhm, sh_spectrum

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (DomainError, EigenSolveError, NoGuidedModeError, DegenerateModeError,
                    NotPhaseMatchableError, np.linalg.LinAlgError, ArithmeticError, RuntimeError)

log = logging.getLogger("qpmshg")


# ----------------------------------------------------------------------------
# deterministic serialization


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else float(fmt(v))
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_clean({"schema_version": SCHEMA_VERSION, **payload}), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, payload: dict) -> None:
    atomic_write_text(path, dumps(payload))


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------------------
# logging


class JsonFormatter(logging.Formatter):
    FIELDS = ("operation", "duration_s", "cache_hit", "max_residual", "command", "outputs", "polarization",
              "wavelength_nm", "count")

    def format(self, record):
        data = {"level": record.levelname, "logger": record.name, "message": record.getMessage()}
        for name in self.FIELDS:
            if hasattr(record, name):
                data[name] = getattr(record, name)
        return json.dumps(_clean(data), sort_keys=True)


def _setup_logging(verbose: bool, out: Path | None):
    root = logging.getLogger("qpmshg")
    root.handlers.clear()
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False
    err = logging.StreamHandler(sys.stderr)
    err.setFormatter(JsonFormatter())
    err.setLevel(logging.DEBUG if verbose else logging.WARNING)
    root.addHandler(err)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(out / "run.log", mode="w")
        fh.setFormatter(JsonFormatter())
        root.addHandler(fh)
    return root


# ----------------------------------------------------------------------------
# commands


def _device(cfg: RunConfig) -> Device:
    return Device(cfg.geometry, cfg.dispersion, cfg.poling, cfg.tensor)


def _settings(cfg: RunConfig, out: Path) -> SolverSettings:
    run = cfg.section("run")
    cache_dir = str(out / "cache") if run["cache"] else None
    return SolverSettings(resolution=run["mesh_resolution"], grading=run["grading"], tolerance=run["tolerance"],
                          seed=run["seed"], samples=run["samples"], sh_modes=run["sh_modes"],
                          threads=run["threads"], cache_dir=cache_dir)


def _triples(names):
    try:
        return triples_by_name(names)
    except (ValueError, IndexError) as err:
        raise ConfigError(f"cannot parse triple names {list(names)}: {err}", field="triples") from None


def cmd_modes(cfg, out, settings, args):
    sec = cfg.section("modes")
    geometry, dispersion = cfg.geometry, cfg.dispersion
    mesh = build_mesh(geometry, settings.resolution, settings.grading)
    records, modes = [], []
    for pol in sec["polarizations"]:
        found = solve_modes(geometry, dispersion, sec["wavelength_nm"], pol, mesh=mesh,
                            max_modes=sec["max_modes"], tolerance=settings.tolerance, seed=settings.seed)
        modes.extend(found)
        records.extend(m.metadata() for m in found)
    write_json(out / "modes.json", {"command": "modes", "wavelength_nm": sec["wavelength_nm"],
                                    "mesh_nodes": mesh.num_nodes, "modes": records})
    nx, ny = sec["profile_points"]
    header, columns = ["x_um", "y_um"], []
    xs = ys = None
    for m in modes:
        xs, ys, img = render_intensity(m, shape=(nx, ny))
        lab = "".join(map(str, m.label)) if m.label is not None else "xx"
        header.append(f"{m.polarization}{lab}")
        columns.append(img.ravel())
    if xs is not None:
        X, Y = np.meshgrid(xs, ys)
        rows = zip(X.ravel(), Y.ravel(), *columns)
        write_csv(out / "profile.csv", header, rows)
    return ["modes.json", "profile.csv"] if modes else ["modes.json"]


def cmd_census(cfg, out, settings, args):
    sec = cfg.section("census")
    geometry, dispersion = cfg.geometry, cfg.dispersion
    mesh = build_mesh(geometry, settings.resolution, settings.grading)
    counts = {}
    for nm in sec["wavelengths_nm"]:
        for pol in sec["polarizations"]:
            t0 = time.perf_counter()
            counts[f"{pol}{fmt(nm)}"] = mode_census(geometry, dispersion, nm, pol, mesh=mesh)
            log.info("census", extra={"operation": "mode_census", "polarization": pol, "wavelength_nm": nm,
                                      "count": counts[f"{pol}{fmt(nm)}"],
                                      "duration_s": round(time.perf_counter() - t0, 3)})
    write_json(out / "census.json", counts)
    return ["census.json"]


def cmd_match(cfg, out, settings, args):
    sec = cfg.section("match")
    kind = args.type or sec["type"]
    types = ("II", "0", "I") if kind == "all" else (kind,)
    device = _device(cfg)
    bank = ModeBank(device, sec["pump_nm"], cfg.section("pump")["fwhm_nm"], settings).build()
    records = []
    for t in types:
        res = optimal_poling_period(t, sec["pump_nm"], bank.tables, sec["harmonic"])
        records.append({"type": res.shg_type, "harmonic": res.harmonic, "triple": res.triple.name,
                        "period_um": res.period_um, "harmonic_period_um": res.harmonic_period_um,
                        "mismatch_per_um": res.mismatch_per_um})
    write_json(out / "match.json", {"command": "match", "pump_nm": sec["pump_nm"], "results": records})
    return ["match.json"]


def _pump(cfg, bank) -> PumpSpec:
    p = cfg.section("pump")
    band = tuple(p["passband_nm"]) if p["passband_nm"] is not None else None
    return PumpSpec(p["center_nm"], p["fwhm_nm"], {k: 1.0 for k in bank.pump_keys()}, band, p["shape"])


def cmd_spectrum(cfg, out, settings, args):
    sec, p = cfg.section("spectrum"), cfg.section("pump")
    device = _device(cfg)
    bank = ModeBank(device, p["center_nm"], p["fwhm_nm"], settings, sh_polarizations=("TE",)).build()
    if sec["triples"]:
        triples = _triples(sec["triples"])
        d = {t: bank.overlap(t).value for t in triples}
    else:
        triples, d = allowed_type_ii_triples(bank, sec["threshold"])
    lo, hi = bank.sh_range_nm
    lam = np.linspace(sec["lambda_min_nm"] if sec["lambda_min_nm"] is not None else lo,
                      sec["lambda_max_nm"] if sec["lambda_max_nm"] is not None else hi, sec["points"])
    pump = _pump(cfg, bank)
    spec = sh_spectrum(pump, triples, bank.tables, d, device.geometry.length_um, device.poling, lam,
                       points=p["points"])
    header = ["lambda2_nm", "intensity"]
    cols = [spec.wavelength_nm, spec.intensity]
    if sec["broadening_nm"] > 0:
        header.append("intensity_broadened")
        cols.append(broaden(spec, sec["broadening_nm"]).intensity)
    for t in triples:
        header.append(t.name)
        cols.append(spec.contribution_intensity(t.name))
    write_csv(out / "spectrum.csv", header, zip(*cols))
    lines = {}
    for t in triples:
        try:
            lines[t.name] = find_phase_matched_wavelength(t, bank.tables, device.poling, (lo, hi)).wavelength_nm
        except NotPhaseMatchableError:
            lines[t.name] = None
    write_json(out / "spectrum.json", {"command": "spectrum", "pump": {"center_nm": p["center_nm"],
               "fwhm_nm": p["fwhm_nm"], "shape": p["shape"]}, "lines_nm": lines,
               "overlaps_abs": {t.name: abs(d[t]) for t in triples}, "integrated": spec.integrated(),
               "fwhm_nm": gaussian_fwhm(spec.wavelength_nm, spec.intensity)})
    return ["spectrum.csv", "spectrum.json"]


def cmd_scan(cfg, out, settings, args):
    sec = cfg.section("scan")
    if sec["values"] is not None:
        values = np.array(sec["values"], dtype=float)
    else:
        values = np.linspace(sec["start"], sec["stop"], sec["num"])
    triples = _triples(sec["triples"]) if sec["triples"] else list(SENSITIVITY_TRIPLES)
    device = _device(cfg)
    p = cfg.section("pump")
    res = sensitivity_scan(sec["parameter"], values, triples, device, settings, p["center_nm"], p["fwhm_nm"])
    write_csv(out / "scan.csv", ["param", "value", "triple", "dlambda2_nm"], res.rows())
    write_json(out / "scan.json", {"command": "scan", "parameter": res.parameter, "nominal": res.nominal,
               "values": res.values.tolist(),
               "triples": {t.name: {"lambda2_nm": res.wavelengths_nm[:, j].tolist(),
                                    "spread_nm": float(res.spread()[j]), "slope_nm_per_unit": float(res.slopes[j])}
                           for j, t in enumerate(res.triples)},
               "flags": res.flags})
    return ["scan.csv", "scan.json"]


def cmd_table(cfg, out, settings, args):
    sec, p = cfg.section("table"), cfg.section("pump")
    bank = ModeBank(_device(cfg), p["center_nm"], p["fwhm_nm"], settings, sh_polarizations=("TE",)).build()
    rows = process_table(bank, sec["pump_fwhm_nm"], sec["threshold"], sec["power"], sec["window_nm"],
                         sec["points"], p["points"])
    write_csv(out / "table.csv", ["triple", "lambda2_nm", "rel_power"],
              ((process_label(r.triple), r.wavelength_nm, r.rel_power) for r in rows))
    write_json(out / "table.json", {"command": "table", "power": sec["power"], "rows": [
        {"triple": process_label(r.triple), "name": r.triple.name, "lambda2_nm": r.wavelength_nm,
         "rel_power": r.rel_power, "overlap_abs": r.overlap_abs, "flag": r.flag} for r in rows]})
    return ["table.csv", "table.json"]


def _layers(text: str):
    out = []
    for item in text.split(","):
        try:
            d, n = item.split(":")
            out.append((float(d), float(n)))
        except ValueError:
            raise ConfigError(f"layer {item.strip()!r} is not thickness:index", field="oracle.layers") from None
    return out


def cmd_oracle(cfg, out, settings, args):
    o = cfg.section("oracle")
    kind = o["kind"]
    record = {"command": "oracle", "kind": kind}
    files = ["oracle.json"]
    if kind == "slab":
        record["n_eff"] = slab_effective_index(_layers(o["layers"]), o["wavelength_um"], o["order"],
                                               o["cover_index"], o["substrate_index"], o["polarization"])
    elif kind == "graded":
        disp, g = cfg.dispersion, cfg.geometry
        nm = o["wavelength_um"] * 1e3
        n0 = {a: float(disp.substrate_index(a, nm)) for a in "xyz"}
        dn = {a: float(disp.increment(a, nm)) for a in "xyz"}
        record["n_eff"] = graded_slab_index(n0, dn, g.depth, o["wavelength_um"], o["polarization"], o["order"])
    elif kind == "marcatili":
        record["n_eff"] = marcatili_rect_index(o["width_um"], o["height_um"], o["core_index"], o["clad_index"],
                                               o["wavelength_um"], tuple(o["mode"]))
    elif kind == "autoconvolution":
        pump = PumpSpec(o["center_nm"], o["fwhm_nm"])
        k = np.linspace(*pump.band(3.0), o["points"])
        lam, inten = autoconvolution_spectrum(k, pump.envelope(k))
        write_csv(out / "oracle.csv", ["lambda2_nm", "intensity"], zip(lam, inten))
        files.append("oracle.csv")
        record["sh_fwhm_nm"] = gaussian_fwhm(lam, inten)
        record["pump_fwhm_nm"] = o["fwhm_nm"]
    else:
        orders = list(o["orders"])
        record["orders"] = orders
        record["coefficients"] = fft_poling_coefficients(o["duty_ratio"], orders).tolist()
    write_json(out / "oracle.json", record)
    return files


HANDLERS = {"modes": cmd_modes, "census": cmd_census, "match": cmd_match, "spectrum": cmd_spectrum,
            "scan": cmd_scan, "table": cmd_table, "oracle": cmd_oracle}


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qpmshg", description="Mode solving and quasi-phase-matched SHG in "
                                 "diffused channel waveguides.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", help="output directory (default: [run] out, else ./qpmshg-out)")
    ap.add_argument("--mesh-res", type=float, help="coarse mesh size in um")
    ap.add_argument("--no-cache", action="store_true", help="do not read or write the mode cache")
    ap.add_argument("--threads", type=int, help="worker threads for mode solves")
    ap.add_argument("--seed", type=int, help="eigensolver start-vector seed")
    ap.add_argument("--type", choices=("II", "0", "I", "all"), help="SHG type for the match command")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug-level structured logs on stderr")
    ap.add_argument("--version", action="version", version=f"qpmshg {__version__}")
    return ap


def _origin(err: BaseException) -> tuple[str | None, str | None]:
    """Innermost package frame of the traceback: (module, function)."""
    module = operation = None
    for frame in traceback.extract_tb(err.__traceback__):
        path = Path(frame.filename)
        if path.parent.name == "qpmshg" and path.stem not in ("cli", "__init__"):
            module, operation = path.stem, frame.name
    return module, operation


def _fail(out: Path | None, code: int, kind: str, err: BaseException, **extra) -> int:
    record = {"status": "error", "exit_code": code, "kind": kind, "error_type": type(err).__name__,
              "message": str(err), **extra}
    text = dumps(record)
    sys.stderr.write(text)
    if out is not None:
        try:
            atomic_write_text(out / "error.json", text)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args.config, args.command)
        run = cfg.section("run")
        if out is None:
            out = Path(run["out"] or "qpmshg-out")
        if args.mesh_res is not None:
            if args.mesh_res <= 0:
                raise ConfigError("--mesh-res must be positive", field="--mesh-res")
            run["mesh_resolution"] = args.mesh_res
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1", field="--threads")
            run["threads"] = args.threads
        if args.seed is not None:
            run["seed"] = args.seed
        if args.no_cache:
            run["cache"] = False
    except ConfigError as err:
        return _fail(out, EXIT_CONFIG, "config", err, line=err.line, field=err.field)

    out.mkdir(parents=True, exist_ok=True)
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    _setup_logging(args.verbose, out)
    t0 = time.perf_counter()
    try:
        settings = _settings(cfg, out)
        files = HANDLERS[args.command](cfg, out, settings, args)
    except ConfigError as err:
        return _fail(out, EXIT_CONFIG, "config", err, line=err.line, field=err.field)
    except ConfigurationError as err:
        return _fail(out, EXIT_CONFIG, "config", err, line=None, field=None)
    except NUMERICAL_ERRORS as err:
        module, operation = _origin(err)
        log.error("numerical failure: %s", err, extra={"operation": operation, "command": args.command})
        return _fail(out, EXIT_NUMERICAL, "numerical", err, module=module, operation=operation)
    log.info("done", extra={"command": args.command, "duration_s": round(time.perf_counter() - t0, 3),
                            "outputs": files})
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
