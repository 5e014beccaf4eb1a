"""Command-line front end.

    nlpemem <command> --config CFG.json [--seed N] [--out DIR] [--force] [--workers N] [--plot]
    nlpemem validate --config CFG.json
    nlpemem schema <command>

Exit codes: 0 success, 2 usage/config errors, 3 numerical failures.  Errors
are printed to stderr as one JSON object.  Result files never contain the
run time; that lives only in ``run_record.json``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, config, echosim, holeburn, model, photonics, rffield
from .errors import NlpeError
from .spectral import Pulse, SpectralDistribution

OUT_ENV = "NLPEMEM_OUT"
LOCK_NAME = ".nlpemem.lock"
RECORD_NAME = "run_record.json"


class CliError(Exception):
    def __init__(self, code: int, message: str, errors=None):
        super().__init__(message)
        self.code = code
        self.errors = errors or []


# ---------------------------------------------------------------------------
# artifact writers


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


class Artifacts:
    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []

    def write_text(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        self.write_text(name, dumps(obj))

    def csv(self, name: str, header, rows) -> None:
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        self.files.append(name)

    def digests(self) -> dict:
        return {n: _sha256(self.out / n) for n in sorted(self.files)}


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dist(fwhm: float, center: float = 0.0) -> SpectralDistribution:
    return SpectralDistribution.gaussian(fwhm, center) if fwhm > 0 else SpectralDistribution.delta(center)


def _gnuplot(title: str, csv_name: str, x: int, ys: list[tuple[int, str]], xlabel: str, ylabel: str,
             logy: bool = False) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead", f"set title '{title}'",
             f"set xlabel '{xlabel}'", f"set ylabel '{ylabel}'"]
    if logy:
        lines.append("set logscale y")
    plots = ", ".join(f"'{csv_name}' using {x}:{c} with linespoints title '{t}'" for c, t in ys)
    lines.append(f"plot {plots}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def run_echo_decay(cfg: dict, art: Artifacts, workers: int, plot: bool, base: Path) -> dict:
    m, tm, sw, sim = cfg["model"], cfg["timing"], cfg["sweep"], cfg["simulation"]
    params = model.NlpeParams(m["d"], m["eta_control"], m["gamma13"], m["gamma35"], m["gamma"])
    dd_cfg = cfg["dd"]
    errors = echosim.PulseErrorModel(dd_cfg["angle_error"] if dd_cfg else 0.0)
    rows = []
    for v in sw["values"]:
        if sw["axis"] == "t31":
            t31, t42 = v, tm["t42"]
        elif sw["axis"] == "t42":
            t31, t42 = tm["t31"], v
        else:
            t31, t42 = v + tm["t32"], tm["t42"]
        store = t31 - tm["t32"]
        dd = None
        if dd_cfg:
            template = Pulse.square_pi(math.pi / dd_cfg["pulse_duration"])
            dd = echosim.DDSequence.named(dd_cfg["sequence"], storage=store, template=template,
                                          repeats=dd_cfg["repeats"])
        sched = echosim.build_nlpe_schedule(t31, t42, store, dd, input_delay=tm["input_delay"])
        res = echosim.simulate_echo(sched, _dist(m["gamma35"]), _dist(m["gamma13"]), errors, m["d"],
                                    sim["n_ions"], cfg["seed"], absorption_dist=_dist(sim["absorption_fwhm"]),
                                    gamma_hom=m["gamma"], eta_control=m["eta_control"],
                                    trace_points=sim["trace_points"], workers=workers)
        # ideal DD refocuses the static spin phase inside its block, leaving only t32 to dephase
        spin_t = tm["t32"] if dd is not None else t31
        rows.append([float(v), t31, t42, store, sched.echo_time, res.efficiency,
                     float(model.nlpe_efficiency(params, spin_t, t42)), spin_t, res.residual_spin_population])
    art.csv("echo_decay.csv", ["sweep_value_s", "t31_s", "t42_s", "spin_storage_s", "echo_time_s",
                               "efficiency_mc", "efficiency_model", "model_spin_interval_s",
                               "residual_population"], rows)
    summary = {"axis": sw["axis"], "points": len(rows),
               "lifetime_1e_model_s": None}
    if sw["axis"] in ("t31", "t42"):
        try:
            summary["lifetime_1e_model_s"] = model.lifetime_1e(params, sw["axis"])
        except NlpeError:
            pass
    if cfg["fit"]:
        data = np.array([[r[0], r[5]] for r in rows])
        fit = model.fit_decay(data, cfg["fit"], seed=cfg["seed"])
        art.json("fit.json", fit.to_dict())
        summary["fit_converged"] = fit.converged
    if plot:
        art.write_text("echo_decay.gp", _gnuplot("echo decay", "echo_decay.csv", 1, [(6, "Monte Carlo"), (7, "model")],
                                                 "sweep value (s)", "efficiency"))
    return summary


def run_dd_bench(cfg: dict, art: Artifacts, workers: int, plot: bool, base: Path) -> dict:
    template = Pulse.square_pi(math.pi / cfg["pulse_duration"])
    rows = []
    for name in cfg["sequences"]:
        dd = echosim.DDSequence.named(name, storage=cfg["storage"], template=template)
        for e in cfg["angle_errors_over_pi"]:
            err = echosim.PulseErrorModel(e * math.pi, _dist(cfg["detuning_fwhm"]),
                                          _dist(cfg["angle_scale_fwhm"], 1.0))
            r = echosim.spin_rephasing_efficiency(dd, err, cfg["n_ions"], cfg["seed"], workers=workers)
            rows.append([name, float(e), e * math.pi, r.rephasing_efficiency, r.residual_population])
    art.csv("dd_bench.csv", ["sequence", "angle_error_over_pi", "angle_error_rad", "rephasing_efficiency",
                             "residual_population"], rows)
    if plot:
        art.write_text("dd_bench.gp", "set datafile separator ','\nset key autotitle columnhead\n"
                       "set xlabel 'angle error / pi'\nset ylabel 'residual population'\n"
                       "plot 'dd_bench.csv' using 2:5 with points title 'all sequences'\n")
    return {"rows": len(rows)}


def run_fidelity(cfg: dict, art: Artifacts, workers: int, plot: bool, base: Path) -> dict:
    ch = photonics.MemoryChannel(**cfg["channel"])
    reports, rows = [], []
    for r in cfg["rows"]:
        rep = photonics.FidelityReport.build(r["mu_q"], ch, r["F_e"], r["F_l"], r["F_plus"], r["F_plusi"])
        reports.append(rep.to_dict())
        rows.append([rep.mu_q, rep.f_e, rep.f_l, rep.f_plus, rep.f_plusi, rep.f_total, rep.theoretical,
                     rep.classical_bound, rep.n_min, rep.verdict])
    art.csv("table.csv", ["mu_q", "F_e", "F_l", "F_plus", "F_plusi", "F_T", "F_theory", "classical_bound",
                          "n_min", "verdict"], rows)
    art.json("reports.json", reports)
    c = cfg["curve"]
    curve = []
    for mu in np.geomspace(c["mu_min"], c["mu_max"], c["n"]):
        b, n_min = photonics.classical_bound(float(mu), ch.eta_m)
        curve.append([float(mu), photonics.theoretical_fidelity(float(mu), ch), b, n_min])
    art.csv("curve.csv", ["mu_q", "F_theory", "classical_bound", "n_min"], curve)
    summary = {"rows": len(rows), "quantum": [r[-1] == "quantum" for r in rows]}
    mc = cfg["monte_carlo"]
    if mc:
        out = []
        for i, label in enumerate(("e", "l", "e+l", "e+il")):
            f, n_plus, n_minus = photonics.measure_fidelity(ch, label, mc["mu_q"], mc["repetitions"],
                                                            cfg["seed"] + 2 * i, workers=workers)
            port = 1.0 if label in ("e", "l") else 0.5
            out.append([label, n_plus, n_minus, f, photonics.theoretical_fidelity(mc["mu_q"], ch, port)])
        art.csv("monte_carlo.csv", ["state", "n_plus", "n_minus", "fidelity", "theoretical"], out)
    if plot:
        art.write_text("fidelity.gp", "set datafile separator ','\nset key autotitle columnhead\nset logscale x\n"
                       "set xlabel 'mu_q'\nset ylabel 'fidelity'\n"
                       "plot 'curve.csv' using 1:2 with lines title 'theory', "
                       "'curve.csv' using 1:3 with lines title 'classical bound', "
                       "'table.csv' using 1:6 with points title 'measured'\n")
    return summary


def run_holeburn(cfg: dict, art: Artifacts, workers: int, plot: bool, base: Path) -> dict:
    scheme = holeburn.LevelScheme.from_dict(cfg["scheme"])
    if cfg["steps"] is None:
        steps = holeburn.default_preparation(**cfg["recipe"])
    else:
        steps = [holeburn.PumpStep(s["ground_level"], s["excited_level"], tuple(s["sweep_band"]), s["duration"],
                                   s["rate"], s["linewidth"]) for s in cfg["steps"]]
    pops = holeburn.burn(scheme, cfg["background_depth"], steps, **cfg["lattice"])
    prof = holeburn.absorption_spectrum(pops, scheme, cfg["background_depth"])
    art.csv("profile.csv", ["freq_hz", "alpha"], zip(prof.grid, prof.alpha))
    metrics = {"background_depth": cfg["background_depth"], "steps": len(steps)}
    try:
        fwhm, left, right = holeburn.feature_fwhm(prof)
        metrics.update(feature_fwhm_hz=fwhm, feature_left_hz=left, feature_right_hz=right,
                       feature_peak=float(prof.alpha[np.abs(prof.grid) <= 1.5e6].max()))
        metrics["transparent_width_hz"] = holeburn.transparent_width(prof)
        metrics["window_residual"] = holeburn.window_residual(prof)
    except NlpeError as e:
        metrics["metrics_error"] = str(e)
    art.json("metrics.json", metrics)
    if plot:
        art.write_text("holeburn.gp", _gnuplot("prepared absorption", "profile.csv", 1, [(2, "alpha")],
                                               "frequency (Hz)", "optical depth"))
    return metrics


def _layout(cfg: dict) -> rffield.ElectrodeLayout:
    lay = cfg["layout"]
    if lay["type"] == "single":
        return rffield.ElectrodeLayout.single(lay["signal_width"])
    return rffield.ElectrodeLayout.coplanar(lay["signal_width"], lay["gap"], lay["ground_width"])


def run_rf_map(cfg: dict, art: Artifacts, workers: int, plot: bool, base: Path) -> dict:
    layout = _layout(cfg)
    g, m, cal = cfg["grid"], cfg["mode"], cfg["calibration"]
    fmap = rffield.compute_field_map(layout, np.linspace(g["x_min"], g["x_max"], g["nx"]),
                                     np.linspace(g["depth_min"], g["depth_max"], g["nz"]), workers)
    fmap.write_csv(art.out / "field_map.csv")
    art.files.append("field_map.csv")
    centre = (m["center_x"], m["center_depth"])
    b0 = float(np.linalg.norm(rffield.field_at(layout, *centre))) if cfg["axis"] == "magnitude" else \
        float(abs(rffield.field_at(layout, *centre)[0 if cfg["axis"] == "x" else 1]))
    k = cal["rabi_hz"] / (b0 * math.sqrt(cal["power_w"]))
    maps = [rffield.rabi_map(fmap, k, 1.0, p, cfg["axis"]) for p in cfg["powers_w"]]
    xx, zz = np.meshgrid(fmap.x, fmap.depth)
    rows = [[x, z] + [mp[i, j] for mp in maps] for (i, j), x, z in
            zip(np.ndindex(xx.shape), xx.ravel(), zz.ravel())]
    art.csv("rabi_map.csv", ["x_m", "depth_m"] + [f"rabi_hz_at_{p!r}_w" for p in cfg["powers_w"]], rows)
    mx, mz = rffield.mode_grid(m["center_depth"], m["diameter"], m["step"], m["center_x"])
    hom = rffield.homogeneity(rffield.compute_field_map(layout, mx, mz, workers), m["center_depth"],
                              m["diameter"], m["center_x"], cfg["axis"])
    summary = {"layout": layout.to_dict(), "homogeneity": hom.to_dict(), "field_at_mode_center_t_per_a": b0,
               "coupling_times_current_per_sqrt_w": k,
               "rabi_at_mode_center_hz": {repr(float(p)): k * b0 * math.sqrt(p) for p in cfg["powers_w"]}}
    art.json("summary.json", summary)
    if plot:
        art.write_text("rf_map.gp", "set datafile separator ','\nset key autotitle columnhead\nset view map\n"
                       "set xlabel 'x (m)'\nset ylabel 'depth (m)'\nset yrange [*:*] reverse\n"
                       "splot 'field_map.csv' using 1:2:5 with points palette pointtype 5 title '|B| per A'\n")
    return {"rel_std": hom.rel_std}


def run_fit(cfg: dict, art: Artifacts, workers: int, plot: bool, base: Path) -> dict:
    path = (base / cfg["input"]).resolve()
    data = model.load_csv(path)
    kind = cfg["model"]
    if kind == "rabi":
        res = model.fit_rabi_nutation(data, cfg["restarts"])
    elif kind == "voigt":
        res = model.fit_voigt(data, cfg["baseline"], cfg["restarts"])
    else:
        res = model.fit_decay(data, kind, restarts=cfg["restarts"], seed=cfg["seed"])
    art.json("fit.json", res.to_dict())
    return {"converged": res.converged, "input_digests": {cfg["input"]: _sha256(path)}}


def run_snr(cfg: dict, art: Artifacts, workers: int, plot: bool, base: Path) -> dict:
    ch = photonics.MemoryChannel(cfg["channel"]["eta_m"], cfg["channel"]["p_n"])
    # early bin holds the echo, the empty late bin samples the noise floor
    q = photonics.TimeBinQubit(1.0, 0.0, cfg["mu"])
    h = photonics.simulate_counts(ch, q, photonics.Analysis.FULL_PI, cfg["repetitions"], cfg["seed"],
                                  workers=workers, detection_window=cfg["detection_window"])
    h.write_csv(art.out / "histogram.csv")
    art.files.append("histogram.csv")
    sig, noise = int(h.counts[0]), int(h.counts[1])
    summary = {"snr_expected": photonics.snr(cfg["mu"], ch.eta_m, ch.p_n),
               "snr_empirical": (sig - noise) / noise if noise > 0 else None,
               "counts": [sig, noise], "repetitions": cfg["repetitions"]}
    art.json("summary.json", summary)
    return summary


RUNNERS = {
    "echo-decay": run_echo_decay,
    "dd-bench": run_dd_bench,
    "fidelity": run_fidelity,
    "holeburn": run_holeburn,
    "rf-map": run_rf_map,
    "fit": run_fit,
    "snr": run_snr,
}


# ---------------------------------------------------------------------------
# plumbing


def _read_config(path: str) -> dict:
    try:
        return config.load(path)
    except OSError as e:
        raise CliError(2, f"cannot read config: {e}") from e
    except ValueError as e:
        raise CliError(2, f"config is not valid JSON: {e}") from e


def _resolve(cmd: str, raw: dict, seed: int | None) -> dict:
    if isinstance(raw, dict):
        raw = dict(raw)
        raw.setdefault("command", cmd)
        if raw["command"] != cmd:
            raise CliError(2, f"config is for {raw['command']!r}, not {cmd!r}",
                           [{"path": "/command", "message": "command mismatch"}])
        if seed is not None and "seed" in config.SCHEMAS[cmd]["properties"]:
            raw["seed"] = seed
    eff, errs = config.validate(raw)
    if errs:
        raise CliError(2, "config failed validation", errs)
    return eff


def _default_out(cmd: str) -> Path:
    root = os.environ.get(OUT_ENV)
    return Path(root if root else "nlpemem_runs") / cmd


def _acquire(out: Path, force: bool) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as e:
        raise CliError(2, f"output directory {out} is locked by another run") from e
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    if (out / RECORD_NAME).exists() and not force:
        lock.unlink()
        raise CliError(2, f"{out} already holds a run; pass --force to overwrite")
    return lock


def execute(cmd: str, config_path: str, seed: int | None = None, out: str | None = None, force: bool = False,
            workers: int = 1, plot: bool = False) -> Path:
    """Run one subcommand; returns the output directory."""
    raw = _read_config(config_path)
    cfg = _resolve(cmd, raw, seed)
    if workers < 1:
        raise CliError(2, "--workers must be at least 1")
    if cmd == "fit":
        src = Path(config_path).parent / cfg["input"]
        if not src.is_file():
            raise CliError(2, "config failed validation", [{"path": "/input", "message": f"no such file: {src}"}])
    out_dir = Path(out) if out else _default_out(cmd)
    lock = _acquire(out_dir, force)
    try:
        art = Artifacts(out_dir)
        art.json("effective_config.json", cfg)
        try:
            results = RUNNERS[cmd](cfg, art, workers, plot, Path(config_path).parent)
        except (NlpeError, ArithmeticError) as e:
            raise CliError(3, f"{type(e).__name__}: {e}") from e
        inputs = results.pop("input_digests", {}) if isinstance(results, dict) else {}
        inputs["config"] = _sha256(config_path)
        record = {
            "tool": "nlpemem",
            "version": __version__,
            "schema_version": config.SCHEMA_VERSION,
            "command": cmd,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "config": cfg,
            "input_digests": inputs,
            "artifacts": art.digests(),
            "results": results,
        }
        (out_dir / RECORD_NAME).write_text(dumps(record))
    finally:
        lock.unlink(missing_ok=True)
    return out_dir


def validate_file(path: str) -> dict:
    raw = _read_config(path)
    _, errs = config.validate(raw)
    return {"valid": not errs, "errors": errs}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(2, message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nlpemem", description="Spin-wave photon-echo memory toolkit")
    p.add_argument("--version", action="version", version=f"nlpemem {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in config.COMMANDS:
        s = sub.add_parser(name, help=f"run the {name} recipe")
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV}/<command>)")
        s.add_argument("--force", action="store_true", help="overwrite an existing run")
        s.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo blocks")
        s.add_argument("--plot", action="store_true", help="also write gnuplot scripts")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    sc = sub.add_parser("schema", help="print the JSON schema of a command")
    sc.add_argument("name", choices=config.COMMANDS)
    return p


def _fail(e: CliError) -> int:
    sys.stderr.write(json.dumps({"error": e.code == 3 and "numeric_failure" or "usage_or_config",
                                 "exit_code": e.code, "message": str(e), "errors": e.errors},
                                sort_keys=True) + "\n")
    return e.code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "schema":
            sys.stdout.write(config.schema_json(args.name) + "\n")
            return 0
        if args.command == "validate":
            report = validate_file(args.config)
            sys.stdout.write(dumps(report))
            return 0 if report["valid"] else 2
        out = execute(args.command, args.config, args.seed, args.out, args.force, args.workers, args.plot)
        sys.stdout.write(dumps({"status": "ok", "output": str(out)}))
        return 0
    except CliError as e:
        return _fail(e)


if __name__ == "__main__":
    sys.exit(main())
