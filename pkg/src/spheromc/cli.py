"""Experiment driver: validated config in, plot-ready CSV artifacts out.

Config files are YAML with nested sections (documented in the README and
in ``demos/paper.yaml``).  Lengths are given in micrometers in the config
and converted to SI here, at the boundary.  Unknown keys are rejected,
never ignored.  Every CSV carries the config hash and seed so reruns are
auditable; particle-simulation outputs are byte-identical for identical
(config, seed) regardless of worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .analytic import FieldPoint, FrequencyGrid, SpheroidCgf, TruncationPolicy
from .model import MediumModel, SphericalCoord, SpheroidGeometry
from .pbs import ProbeSpec, SimConfig, run_simulation
from .signal import NoPeakError, TimeSeries, compare_receivers, smoothed

__all__ = ["main", "load_config", "ConfigError"]

MODES = ("model", "analytic", "pbs", "compare", "sweep")
_UM = 1e-6


class ConfigError(ValueError):
    """Config file failed validation; message lists every offending field."""


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

def _field(typ, default=None, required=False, positive=False, nonneg=False, choices=None):
    return {"typ": typ, "default": default, "required": required,
            "positive": positive, "nonneg": nonneg, "choices": choices}


_PROBE_SCHEMA = {
    "name": _field(str, required=True),
    "r_um": _field(float, required=True, nonneg=True),
    "theta_rad": _field(float, default=0.0),
    "phi_rad": _field(float, default=0.0),
    "radius_um": _field(float, required=True, positive=True),
    "kind": _field(str, default="sphere", choices=("sphere", "boundary")),
}

_SCHEMA = {
    "geometry": {
        "radius_um": _field(float, required=True, positive=True),
        "n_cells": _field(float, required=True, nonneg=True),
        "cell_volume_m3": _field(float, required=True, nonneg=True),
        "tx": {
            "r_um": _field(float, required=True, positive=True),
            "theta_rad": _field(float, default=math.pi / 2),
            "phi_rad": _field(float, default=0.0),
        },
    },
    "medium": {
        # the free-fluid diffusivity defaults to a typical small-molecule
        # value in water; absolute time axes scale with it
        "d_free_m2_s": _field(float, default=1.0e-9, positive=True),
        "k_f_per_s": _field(float, default=0.0, nonneg=True),
    },
    "analytic": {
        "omega_max_rad_s": _field(float, default=4.0 * math.pi, positive=True),
        "n_samples": _field(int, default=2**14, positive=True),
        "damping": _field(float, default=6.0, positive=True),
        "alias_guard": _field(float, default=1.0e-6, positive=True),
        "truncation_tol": _field(float, default=1.0e-8, positive=True),
        "n_cap": _field(int, default=200, positive=True),
        "t_end_s": _field(float, default=600.0, positive=True),
        "dt_out_s": _field(float, default=0.25, positive=True),
    },
    "pbs": {
        "dt_s": _field(float, default=0.05, positive=True),
        "n_particles": _field(int, default=100000, nonneg=True),
        "seed": _field(int, default=1),
        "t_end_s": _field(float, default=600.0, positive=True),
        "sample_stride": _field(int, default=1, positive=True),
        "absorption_bin_s": _field(float, default=5.0, positive=True),
        "record_absorption": _field(bool, default=True),
        "probes": None,  # list, validated separately
    },
    "sweep": {
        "n_cells_min": _field(float, default=15000.0, positive=True),
        "n_cells_max": _field(float, default=25000.0, positive=True),
        "n_points": _field(int, default=11, positive=True),
    },
    "compare": {
        "smoothing_window_s": _field(float, default=20.0, positive=True),
    },
}


def _coerce(value, spec, path, problems):
    typ = spec["typ"]
    if typ is bool:
        if not isinstance(value, bool):
            problems.append(f"{path}: expected boolean, got {value!r}")
            return None
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or int(value) != value:
            problems.append(f"{path}: expected integer, got {value!r}")
            return None
        value = int(value)
    elif typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{path}: expected number, got {value!r}")
            return None
        value = float(value)
    elif typ is str:
        if not isinstance(value, str):
            problems.append(f"{path}: expected string, got {value!r}")
            return None
    if spec["positive"] and not value > 0:
        problems.append(f"{path}: must be positive, got {value!r}")
    if spec["nonneg"] and value < 0:
        problems.append(f"{path}: must be non-negative, got {value!r}")
    if spec["choices"] and value not in spec["choices"]:
        problems.append(f"{path}: must be one of {spec['choices']}, got {value!r}")
    return value


def _walk(schema, data, path, problems):
    resolved = {}
    if not isinstance(data, dict):
        problems.append(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
        return resolved
    for key in data:
        if key not in schema:
            problems.append(f"{path + key}: unknown key")
    for key, spec in schema.items():
        kpath = path + key
        if spec is None:  # probes list
            probes = data.get(key, [])
            if probes is None:
                probes = []
            if not isinstance(probes, list):
                problems.append(f"{kpath}: expected a list")
                probes = []
            resolved[key] = [
                _walk(_PROBE_SCHEMA, item, f"{kpath}[{i}].", problems)
                for i, item in enumerate(probes)
            ]
        elif isinstance(spec, dict) and "typ" not in spec:
            resolved[key] = _walk(spec, data.get(key, {}), kpath + ".", problems)
        else:
            if key in data:
                resolved[key] = _coerce(data[key], spec, kpath, problems)
            elif spec["required"]:
                problems.append(f"{kpath}: missing required key")
            else:
                resolved[key] = spec["default"]
    return resolved


def load_config(path) -> dict:
    """Parse and validate the YAML config; returns the fully resolved dict."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    problems: list[str] = []
    resolved = _walk(_SCHEMA, data, "", problems)
    if not problems:
        problems.extend(_cross_validate(resolved))
    if problems:
        raise ConfigError("config validation failed:\n  " + "\n  ".join(problems))
    return resolved


def _cross_validate(cfg) -> list[str]:
    problems = []
    g = cfg["geometry"]
    v_s = 4.0 / 3.0 * math.pi * (g["radius_um"] * _UM) ** 3
    if g["n_cells"] * g["cell_volume_m3"] >= v_s:
        problems.append(
            "geometry.n_cells: cell matrix volume reaches the spheroid volume; "
            "porosity must stay positive"
        )
    if g["tx"]["r_um"] <= g["radius_um"]:
        problems.append("geometry.tx.r_um: transmitter must lie strictly outside the spheroid")
    s = cfg["sweep"]
    if s["n_cells_min"] > s["n_cells_max"]:
        problems.append("sweep.n_cells_min: must not exceed sweep.n_cells_max")
    n = cfg["analytic"]["n_samples"]
    if n < 4 or (n & (n - 1)) != 0:
        problems.append("analytic.n_samples: must be a power of two >= 4")
    return problems


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


# ---------------------------------------------------------------------------
# model object construction
# ---------------------------------------------------------------------------

def build_geometry(cfg) -> SpheroidGeometry:
    g = cfg["geometry"]
    return SpheroidGeometry(
        radius_m=g["radius_um"] * _UM,
        n_cells=g["n_cells"],
        cell_volume_m3=g["cell_volume_m3"],
        tx_position=SphericalCoord(g["tx"]["r_um"] * _UM, g["tx"]["theta_rad"],
                                   g["tx"]["phi_rad"]),
    )


def build_medium(cfg, transparent: bool = False) -> MediumModel:
    geom = build_geometry(cfg)
    m = cfg["medium"]
    porosity = 1.0 if transparent else geom.porosity
    return MediumModel.from_porosity(m["d_free_m2_s"], porosity, k_f=m["k_f_per_s"])


def build_probes(cfg) -> tuple[ProbeSpec, ...]:
    return tuple(
        ProbeSpec(name=p["name"],
                  center=SphericalCoord(p["r_um"] * _UM, p["theta_rad"], p["phi_rad"]),
                  radius_m=p["radius_um"] * _UM,
                  kind=p["kind"])
        for p in cfg["pbs"]["probes"]
    )


def build_sim_config(cfg, transparent: bool = False, probes=None, workers=None) -> SimConfig:
    p = cfg["pbs"]
    return SimConfig(
        dt=p["dt_s"], n_particles=p["n_particles"], seed=p["seed"],
        t_end=p["t_end_s"], geom=build_geometry(cfg),
        medium=build_medium(cfg, transparent=transparent),
        probes=build_probes(cfg) if probes is None else probes,
        record_absorption=p["record_absorption"],
        sample_stride=p["sample_stride"],
        absorption_bin_s=p["absorption_bin_s"],
        workers=workers,
    )


def build_fgrid(cfg) -> FrequencyGrid:
    a = cfg["analytic"]
    return FrequencyGrid(omega_max=a["omega_max_rad_s"], n_samples=a["n_samples"],
                         damping=a["damping"], alias_guard=a["alias_guard"])


def build_solver(cfg, transparent: bool = False) -> SpheroidCgf:
    a = cfg["analytic"]
    return SpheroidCgf(build_geometry(cfg), build_medium(cfg, transparent=transparent),
                       truncation=TruncationPolicy(tol=a["truncation_tol"], n_cap=a["n_cap"]))


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _write_series(path: Path, series: TimeSeries, probe_id: str, cfg_hash: str, seed):
    lines = [
        f"# config_sha256: {cfg_hash}",
        f"# seed: {seed}",
        "t_s,value,unit,provenance,probe_id",
    ]
    t = series.times
    for i in range(len(series)):
        lines.append(f"{float(t[i])!r},{float(series.values[i])!r},{series.unit},"
                     f"{series.provenance},{probe_id}")
    path.write_text("\n".join(lines) + "\n")


def _analytic_points(cfg, geom):
    """Field points for the analytic mode, derived from the probe list."""
    points = []
    for p in cfg["pbs"]["probes"]:
        r = p["r_um"] * _UM
        theta, phi = p["theta_rad"], p["phi_rad"]
        if p["kind"] == "boundary":
            eps = 1e-9 * geom.radius_m
            points.append((f"{p['name']}_in",
                           FieldPoint.at(geom.radius_m - eps, theta, phi, geom)))
            points.append((f"{p['name']}_out",
                           FieldPoint.at(geom.radius_m + eps, theta, phi, geom)))
        else:
            points.append((p["name"], FieldPoint.at(r, theta, phi, geom)))
    return points


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

def _run_model(cfg, out: Path, quiet: bool) -> list[Path]:
    geom = build_geometry(cfg)
    medium = build_medium(cfg)
    lines = [
        f"porosity          = {medium.porosity:.6g}",
        f"tortuosity        = {medium.tortuosity:.6g}",
        f"d_eff_m2_s        = {medium.d_eff:.6g}",
        f"boundary_jump_k   = {medium.jump_k:.6g}",
        f"k_f_per_s         = {medium.k_f:.6g}",
        f"spheroid_volume_m3= {geom.volume_m3:.6g}",
    ]
    if not quiet:
        print("\n".join(lines))
    path = out / "model.csv"
    path.write_text(
        "porosity,tortuosity,d_eff_m2_s,jump_k,k_f_per_s\n"
        f"{medium.porosity!r},{medium.tortuosity!r},{medium.d_eff!r},"
        f"{medium.jump_k!r},{medium.k_f!r}\n"
    )
    return [path]


def _run_analytic(cfg, out: Path, cfg_hash: str, quiet: bool) -> list[Path]:
    geom = build_geometry(cfg)
    solver = build_solver(cfg)
    fgrid = build_fgrid(cfg)
    a = cfg["analytic"]
    times = np.arange(a["dt_out_s"], a["t_end_s"] + a["dt_out_s"] / 2, a["dt_out_s"])
    written = []
    for name, point in _analytic_points(cfg, geom):
        series = solver.time_series(point, times, fgrid=fgrid)
        path = out / f"cgf_analytic_{name}.csv"
        _write_series(path, series, name, cfg_hash, "n/a")
        written.append(path)
        if not quiet:
            print(f"wrote {path}")
    return written


def _run_pbs(cfg, out: Path, cfg_hash: str, quiet: bool, workers=None) -> list[Path]:
    sim = build_sim_config(cfg, workers=workers)
    result = run_simulation(sim)
    written = []
    for name, series in result.probes.items():
        path = out / f"pbs_{name}.csv"
        _write_series(path, series, name, cfg_hash, sim.seed)
        written.append(path)
    if result.absorption_rate is not None:
        path = out / "pbs_absorption_rate.csv"
        _write_series(path, result.absorption_rate, "absorption", cfg_hash, sim.seed)
        written.append(path)
    if not quiet:
        for path in written:
            print(f"wrote {path}")
    return written


def _run_compare(cfg, out: Path, cfg_hash: str, quiet: bool, workers=None) -> list[Path]:
    a = cfg["analytic"]
    times = np.arange(a["dt_out_s"], a["t_end_s"] + a["dt_out_s"] / 2, a["dt_out_s"])
    fgrid = build_fgrid(cfg)
    written = []

    rate_sph = build_solver(cfg).received_rate(times, fgrid=fgrid)
    rate_tra = build_solver(cfg, transparent=True).received_rate(times, fgrid=fgrid)
    for tag, series in (("spheroid", rate_sph), ("transparent", rate_tra)):
        path = out / f"rate_analytic_{tag}.csv"
        _write_series(path, series, tag, cfg_hash, "n/a")
        written.append(path)

    sim_s = build_sim_config(cfg, probes=(), workers=workers)
    sim_t = build_sim_config(cfg, transparent=True, probes=(), workers=workers)
    res_s = run_simulation(sim_s)
    res_t = run_simulation(sim_t)
    for tag, res in (("spheroid", res_s), ("transparent", res_t)):
        path = out / f"rate_pbs_{tag}.csv"
        _write_series(path, res.absorption_rate, tag, cfg_hash, sim_s.seed)
        written.append(path)

    window = cfg["compare"]["smoothing_window_s"]
    metrics = {}
    try:
        cmp_a = compare_receivers(rate_sph, rate_tra)
        metrics["analytic"] = {
            "amplification": cmp_a.amplification,
            "peak_delay_s": cmp_a.peak_delay_s,
            "width_ratio": cmp_a.width_ratio,
        }
        cmp_p = compare_receivers(smoothed(res_s.absorption_rate, window),
                                  smoothed(res_t.absorption_rate, window))
        metrics["pbs"] = {
            "amplification": cmp_p.amplification,
            "peak_delay_s": cmp_p.peak_delay_s,
            "width_ratio": cmp_p.width_ratio,
        }
    except NoPeakError as exc:
        metrics["error"] = f"no peak: {exc}"
    path = out / "compare_metrics.json"
    path.write_text(json.dumps(metrics, indent=2) + "\n")
    written.append(path)
    if not quiet:
        print(json.dumps(metrics, indent=2))
        for p in written:
            print(f"wrote {p}")
    return written


def _run_sweep(cfg, out: Path, cfg_hash: str, quiet: bool) -> list[Path]:
    g = cfg["geometry"]
    s = cfg["sweep"]
    radius = g["radius_um"] * _UM
    n_values = np.linspace(s["n_cells_min"], s["n_cells_max"], s["n_points"])
    lines = [f"# config_sha256: {cfg_hash}", "n_cells,porosity,jump_k"]
    from .model import boundary_jump, effective_diffusion, porosity as _porosity
    for n_c in n_values:
        eps = _porosity(float(n_c), g["cell_volume_m3"], radius)
        k = boundary_jump(1.0, effective_diffusion(1.0, eps))
        lines.append(f"{float(n_c)!r},{eps!r},{k!r}")
    path = out / "sweep.csv"
    path.write_text("\n".join(lines) + "\n")
    if not quiet:
        print(f"wrote {path}")
    return [path]


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spheromc",
        description="Diffusive link to a porous spheroidal receiver: porous-medium "
                    "model, series Green's function, Brownian particle simulation, "
                    "and receiver signal comparison.",
        epilog="Worker threads for the particle simulator can be overridden with "
               "the environment variable SPHEROMC_WORKERS (default 1).",
    )
    parser.add_argument("--config", required=True, help="path to the YAML config file")
    parser.add_argument("--mode", required=True, choices=MODES,
                        help="model: print porous-medium numbers; analytic: CGF time "
                             "series per probe; pbs: particle-simulation series; "
                             "compare: spheroid vs transparent receiver; sweep: "
                             "(n_cells, porosity, k) table")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override pbs.seed from the config")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["pbs"]["seed"] = int(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if not args.quiet:
            print("# resolved config")
            print(yaml.safe_dump(cfg, sort_keys=True).rstrip())
        h = config_hash(cfg)
        if args.mode == "model":
            _run_model(cfg, out, args.quiet)
        elif args.mode == "analytic":
            _run_analytic(cfg, out, h, args.quiet)
        elif args.mode == "pbs":
            _run_pbs(cfg, out, h, args.quiet)
        elif args.mode == "compare":
            _run_compare(cfg, out, h, args.quiet)
        elif args.mode == "sweep":
            _run_sweep(cfg, out, h, args.quiet)
        return 0
    except Exception as exc:  # machine-readable failure record
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
