"""Command-line entry point: ``wgmtrap <subcommand> [options]``.

Every run writes its outputs plus ``manifest.json`` into the output
directory (``--output``, else ``$WGMTRAP_OUTPUT_DIR``, else the config's
``output.dir``). CSV files are the canonical outputs; SVG plots mirror them.

Exit codes: 0 success, 2 configuration or data error, 3 numerical failure
(pole guard, Fock cutoff, saddle point, untrapped start), 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .atomdata import SpeciesDataError
from .atomdata.constants import k_B
from .config import ConfigError, load_config, validate
from .cqed import CutoffError, SingularLiouvillianError
from .dynamics import UntrappedError, reconstruct_energy_distribution
from .pipelines import Model
from .stark import ResonanceError
from .svg import line_plot
from .trapfield import SaddlePointError, coupling_strength, trap_center_distance

__all__ = ["main", "build_parser", "PANELS"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
ENV_OUTPUT = "WGMTRAP_OUTPUT_DIR"
PANELS = ("1b", "3a", "3b", "4a", "4b", "S2", "S3", "S4", "S5")
TWO_PI = 2 * math.pi


def _g(x: float) -> str:
    return f"{x:.9g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_g(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class Run:
    """Collects output files and writes the manifest."""

    def __init__(self, out_dir: Path, cfg, command: str, argv):
        self.dir = out_dir
        self.cfg = cfg
        self.command = command
        self.argv = list(argv)
        self.files: dict[str, str] = {}
        self.summary: dict = {}
        self.t0 = time.perf_counter()
        self.started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str):
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def finish(self):
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "version": __version__,
            "config_sha256": self.cfg.digest(),
            "seeds": {"montecarlo": self.cfg.seed},
            "montecarlo": {"n_per_energy": self.cfg.n_per_energy, "duration_s": self.cfg.duration},
            "started_utc": self.started,
            "wall_clock_s": round(time.perf_counter() - self.t0, 3),
            "outputs": dict(sorted(self.files.items())),
            "summary": self.summary,
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")


# ---------------------------------------------------------------- commands

def _pol(args) -> str:
    return args.pol


def cmd_shifts(model: Model, run: Run, args):
    P = args.power_uw * 1e-6
    g_tab, e_tab = model.tables_at(P, _pol(args), args.elliptical, args.waist_ratio)
    rows = []
    for tab in (g_tab, e_tab):
        for s, ls, ev in zip(tab.basis, tab.light_shift, tab.eigenvalues):
            rows.append([tab.level, s.F, s.M, ls * 1e-6, ev / TWO_PI * 1e-6])
    run.write("shifts.csv", _csv(["level", "F", "M", "light_shift_MHz", "total_shift_MHz"], rows))
    scan = model.compensation_scan(np.array([P]), _pol(args), args.elliptical, args.waist_ratio)
    run.write("detunings.csv", scan.to_csv())
    ls = np.asarray(g_tab.light_shift)
    run.summary["ground_light_shift_MHz"] = float(ls.mean() * 1e-6)
    print(f"ground-state light shift ({args.pol}, P_c = {args.power_uw:g} uW): "
          f"{ls.mean() * 1e-6:.2f} MHz (spread {np.ptp(ls) * 1e-6:.3g} MHz)")


def _scan_plot(scan, title, F=3, Fp=4):
    series = [("", scan.P_c * 1e6, scan.curve(F1, M, Fp1, Mp) * 1e-6)
              for (F1, M, Fp1, Mp) in scan.transitions() if F1 == F and Fp1 == Fp]
    return line_plot(series, "P_c (uW)", "detuning (MHz)", title)


def cmd_compensation_scan(model: Model, run: Run, args, name="compensation_scan"):
    scan = model.compensation_scan(model.cfg.grid_scan, _pol(args), args.elliptical, args.waist_ratio)
    run.write(f"{name}.csv", scan.to_csv())
    run.write(f"{name}.svg", _scan_plot(scan, "F=3 -> F'=4 detunings"))
    cyc = scan.zero_crossings(3, 3, 4, 4)
    zs = [z for t in scan.transitions() if t[0] == 3 and t[2] == 4 and abs(t[3]) <= 3
          for z in scan.zero_crossings(*t)]
    spread = _tensor_spread(scan)
    k = int(np.argmin(spread))
    run.summary.update(
        cycling_zero_uW=[z * 1e6 for z in cyc],
        crossing_window_uW=[min(zs) * 1e6, max(zs) * 1e6] if zs else None,
        tensor_min_uW=float(scan.P_c[k] * 1e6),
        tensor_min_detuning_MHz=float(np.nanmean(_f4_detunings(scan)[k]) * 1e-6),
    )
    print(f"cycling cancellation: {', '.join(f'{z * 1e6:.1f}' for z in cyc) or 'none'} uW; "
          f"tensor-spread minimum {scan.P_c[k] * 1e6:.1f} uW")
    return scan


def _f4_detunings(scan):
    cols = [scan.curve(*t) for t in scan.transitions() if t[0] == 3 and t[2] == 4]
    return np.array(cols).T


def _tensor_spread(scan):
    d = _f4_detunings(scan)
    return np.nanmax(d, axis=1) - np.nanmin(d, axis=1)


def cmd_trap(model: Model, run: Run, args):
    x = np.linspace(20e-9, 1000e-9, 491)
    r = np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=-1)
    cols, series = {}, []
    for pol in ("y", "z'"):
        pot = model.potential(pol)
        U = pot(r) / k_B * 1e3
        cols[pol] = U
        series.append((f"U ({pol})", x * 1e9, np.clip(U, -10, None)))
    g = coupling_strength(model.resonator, r) / TWO_PI * 1e-6
    run.write("trap_cut.csv", _csv(["x_nm", "U_y_mK", "U_zp_mK", "g_MHz"],
                                   [[xi * 1e9, a, b, gi] for xi, a, b, gi in zip(x, cols["y"], cols["z'"], g)]))
    run.write("trap_cut.svg", line_plot(series, "x (nm)", "U / k_B (mK)", "trap potential along x"))
    run.write("coupling_cut.svg", line_plot([("g", x * 1e9, g)], "x (nm)", "g / 2pi (MHz)", "coupling strength"))
    for pol in ("y", "z'"):
        s = model.trap_summary(pol)
        run.summary[f"trap_{pol}"] = {
            "x0_nm": s["x0_analytic"] * 1e9, "x0_numeric_nm": s["x0_numeric"] * 1e9,
            "depth_mK": s["depth_mK"], "trap_freq_kHz": [float(w / TWO_PI * 1e-3) for w in s["omega"]],
        }
        print(f"{pol}: x0 = {s['x0_analytic'] * 1e9:.2f} nm, depth = {s['depth_mK']:.3f} mK, "
              f"f = {', '.join(f'{w / TWO_PI * 1e-3:.1f}' for w in s['omega'])} kHz")
    x0 = trap_center_distance(model.trap_beam())
    g0 = float(coupling_strength(model.resonator, np.array([x0, 0.0, 0.0])))
    run.summary["g_at_trap_center_MHz"] = g0 / TWO_PI * 1e-6
    print(f"g(x0) / 2pi = {g0 / TWO_PI * 1e-6:.2f} MHz")


def _histogram(model: Model, args, pol):
    return model.histogram(pol)


def cmd_trajectories(model: Model, run: Run, args):
    h = _histogram(model, args, args.pol)
    tag = "zp" if args.pol == "z'" else "y"
    run.write(f"histogram_{tag}.txt", h.to_text())
    grid = h.grid
    rows = []
    for axis, name in enumerate("xyz"):
        centers = grid.centers(axis)
        for c, p in zip(centers, h.marginal(axis)):
            rows.append([name, c * 1e9, p])
    run.write(f"marginals_{tag}.csv", _csv(["axis", "position_nm", "probability"], rows))
    mean, std = model.coupling_stats(h)
    run.summary.update(g_mean_MHz=mean / TWO_PI * 1e-6, g_std_MHz=std / TWO_PI * 1e-6,
                       escaped=int(h.n_escaped))
    print(f"coupling over histogram ({args.pol}): mean {mean / TWO_PI * 1e-6:.2f} MHz, "
          f"std {std / TWO_PI * 1e-6:.2f} MHz")


def cmd_fluorescence(model: Model, run: Run, args, name="fluorescence"):
    P = model.cfg.grid_fluor
    spec = model.fluorescence(P, _histogram(model, args, "y"), waist_ratio=args.waist_ratio,
                              breakdown=args.breakdown)
    norm = spec.values.max() if spec.values.max() > 0 else 1.0
    header = ["P_c_uW", "fluorescence_rel"]
    labels = []
    if args.breakdown:
        ops = model.stark_ops(True)
        gb, eb = ops["g"]["basis"], ops["e"]["basis"]
        first = next(iter(spec.breakdown.values()))
        pairs = [(i, j) for i in range(first.shape[0]) for j in range(first.shape[1])
                 if any(spec.breakdown[p][i, j] > 0 for p in spec.breakdown)]
        labels = pairs
        header += [f"F{gb[i].F:g}_M{gb[i].M:g}_Fp{eb[j].F:g}_Mp{eb[j].M:g}" for i, j in pairs]
    rows = []
    for P_k, v in zip(P, spec.values):
        row = [P_k * 1e6, v / norm]
        if args.breakdown:
            B = spec.breakdown[float(P_k)]
            row += [B[i, j] / norm for i, j in labels]
        rows.append(row)
    run.write(f"{name}.csv", _csv(header, rows))
    run.write(f"{name}.svg", line_plot([("model", P * 1e6, spec.values / norm)], "P_c (uW)",
                                       "fluorescence (rel.)", "averaged fluorescence"))
    run.summary.update(fluor_peak_uW=spec.metadata["peak_W"] * 1e6, fluor_fwhm_uW=spec.metadata["fwhm_W"] * 1e6)
    print(f"fluorescence peak {spec.metadata['peak_W'] * 1e6:.1f} uW, "
          f"FWHM {spec.metadata['fwhm_W'] * 1e6:.1f} uW")


def _transmission_csv(model, run, P, hist, name, title):
    det = model.cfg.grid_detuning
    spec = model.transmission(P, det, hist)
    run.write(f"{name}.csv", _csv(["detuning_MHz", "transmission"],
                                  [[d / TWO_PI * 1e-6, t] for d, t in zip(det, spec.values)]))
    run.write(f"{name}.svg", line_plot([("model", det / TWO_PI * 1e-6, spec.values)], "detuning (MHz)",
                                       "transmission", title))
    mins = [m / TWO_PI * 1e-6 for m in spec.metadata["minima"]]
    run.summary[name] = {"P_c_uW": P * 1e6, "minima_MHz": mins, "symmetry": spec.metadata["symmetry"]}
    print(f"{name}: P_c = {P * 1e6:.0f} uW, minima at {', '.join(f'{m:+.2f}' for m in mins)} MHz")
    return spec


def cmd_transmission(model: Model, run: Run, args):
    hist = _histogram(model, args, "z'")
    grid = model.cfg.grid_trans_power
    best, metrics = model.most_symmetric_power(grid, model.cfg.grid_detuning, hist)
    run.write("symmetry_scan.csv", _csv(["P_c_uW", "asymmetry"],
                                        [[p * 1e6, m / TWO_PI * 1e-6] for p, m in zip(grid, metrics)]))
    run.summary["most_symmetric_uW"] = best * 1e6
    print(f"most symmetric transmission spectrum at P_c = {best * 1e6:.1f} uW")
    P = best if args.power_uw is None else args.power_uw * 1e-6
    _transmission_csv(model, run, P, hist, "transmission", "averaged transmission")
    mean, std = model.coupling_stats(hist)
    run.summary.update(g_mean_MHz=mean / TWO_PI * 1e-6, g_std_MHz=std / TWO_PI * 1e-6)


# ---------------------------------------------------------------- figure panels

def panel_1b(model, run, args):
    cmd_trap(model, run, args)


def panel_3a(model, run, args):
    ns = argparse.Namespace(**{**vars(args), "pol": "y", "elliptical": False, "waist_ratio": 1.0})
    cmd_compensation_scan(model, run, ns, name="panel_3a")


def panel_3b(model, run, args):
    cmd_fluorescence(model, run, args, name="panel_3b")


def panel_4a(model, run, args):
    P = model.cfg.transmission_panels.get("4a", 400e-6)
    _transmission_csv(model, run, P, _histogram(model, args, "z'"), "panel_4a", "compensated")


def panel_4b(model, run, args):
    P = model.cfg.transmission_panels.get("4b", 0.0)
    _transmission_csv(model, run, P, _histogram(model, args, "z'"), "panel_4b", "no compensation")


def panel_S2(model, run, args):
    frac = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    pot = model.potential("y")
    U0 = pot.depth()
    eta = model.survival_curve(frac)
    rec = reconstruct_energy_distribution(frac * U0, eta, U0)
    run.write("panel_S2a.csv", _csv(["U_low_over_U0", "survival"], zip(frac, eta)))
    dist = model.energy_distribution(pot)
    E = np.linspace(0, 1, 101) * U0
    fit = rec.gaussian.pdf(E) * U0 if rec.gaussian is not None else np.full(E.size, np.nan)
    run.write("panel_S2b.csv", _csv(["E_over_U0", "model_density", "reconstructed_fit"],
                                    [[e / U0, d * U0, f] for e, d, f in zip(E, dist.pdf(E), fit)]))
    run.write("panel_S2b.svg", line_plot([("input", E / U0, dist.pdf(E) * U0), ("reconstructed", E / U0, fit)],
                                         "E / U0", "density", "energy distribution"))
    if rec.gaussian is not None:
        run.summary["reconstructed_E0_over_U0"] = rec.gaussian.E0 / U0
        print(f"reconstructed E0 = {rec.gaussian.E0 / U0:.3f} U0 (input {model.cfg.E0_fraction:.3f} U0)")


def panel_S3(model, run, args):
    scan = model.compensation_scan(model.cfg.grid_scan, "y", False, 1.0)
    cyc = scan.zero_crossings(3, 3, 4, 4)
    k = int(np.argmin(_tensor_spread(scan)))
    powers = {"a": 0.0, "b": cyc[0] if cyc else float("nan"), "c": float(scan.P_c[k])}
    rows = []
    for tag, P in powers.items():
        if not np.isfinite(P):
            continue
        one = model.compensation_scan(np.array([P]), "y", False, 1.0)
        for t in one.transitions():
            if t[0] == 3:
                rows.append([tag, P * 1e6, t[0], t[1], t[2], t[3], float(one.curve(*t)[0] * 1e-6)])
    run.write("panel_S3.csv", _csv(["panel", "P_c_uW", "F", "M", "Fprime", "Mprime", "detuning_MHz"], rows))
    run.summary["S3_powers_uW"] = {t: P * 1e6 for t, P in powers.items()}


def panel_S4(model, run, args):
    scan = model.compensation_scan(model.cfg.grid_scan * 2, "y", True, model.cfg.waist_ratio)
    rows = []
    for k, P in enumerate(scan.P_c):
        for i, s in enumerate(scan.ground_basis):
            if s.twoF == 6:
                rows.append(["ground", P * 1e6, s.F, s.M, scan.ground_shift[k, i] * 1e-6])
        for j, s in enumerate(scan.excited_basis):
            if s.twoF == 8:
                rows.append(["excited", P * 1e6, s.F, s.M, scan.excited_shift[k, j] * 1e-6])
    run.write("panel_S4.csv", _csv(["state", "P_c_uW", "F", "M", "shift_MHz"], rows))
    run.write("panel_S4.svg", _scan_plot(scan, "elliptical polarization, mismatched waists"))
    zs = [z for t in scan.transitions() if t[0] == 3 and t[2] == 4 for z in scan.zero_crossings(*t)]
    if zs:
        run.summary["S4_crossing_median_uW"] = float(np.median(zs) * 1e6)


def panel_S5(model, run, args):
    hist = _histogram(model, args, "z'")
    for tag in ("S5a", "S5b"):
        P = model.cfg.transmission_panels.get(tag)
        if P is not None:
            _transmission_csv(model, run, P, hist, f"panel_{tag}", f"P_c = {P * 1e6:.0f} uW")


PANEL_FUNCS = {"1b": panel_1b, "3a": panel_3a, "3b": panel_3b, "4a": panel_4a, "4b": panel_4b,
               "S2": panel_S2, "S3": panel_S3, "S4": panel_S4, "S5": panel_S5}


def cmd_figures(model: Model, run: Run, args):
    for p in args.panel or PANELS:
        PANEL_FUNCS[p](model, run, args)


COMMANDS = {
    "shifts": cmd_shifts,
    "compensation-scan": cmd_compensation_scan,
    "trap": cmd_trap,
    "trajectories": cmd_trajectories,
    "fluorescence": cmd_fluorescence,
    "transmission": cmd_transmission,
    "figures": cmd_figures,
}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment TOML (default: built-in parameters)")
    common.add_argument("--species", type=Path, help="override the species data file")
    common.add_argument("--output", type=Path, help=f"output directory (else ${ENV_OUTPUT}, else config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for Monte Carlo")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--n-per-energy", type=int, help="trajectories per energy grid point")
    common.add_argument("--duration-us", type=float, help="trajectory duration (us)")
    common.add_argument("--waist-ratio", type=float, help="compensation to trap waist ratio")

    p = argparse.ArgumentParser(prog="wgmtrap", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"wgmtrap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("shifts", parents=[common], help="light shifts at the trap center")
    s.add_argument("--pol", choices=("y", "z'"), default="y")
    s.add_argument("--power-uw", type=float, default=0.0, help="compensation power (uW)")
    s.add_argument("--elliptical", action="store_true", help="use the configured imperfect polarization")

    s = sub.add_parser("compensation-scan", parents=[common], help="transition detunings vs P_c")
    s.add_argument("--pol", choices=("y", "z'"), default="y")
    s.add_argument("--elliptical", action="store_true")

    sub.add_parser("trap", parents=[common], help="trap potential and coupling line cuts")

    s = sub.add_parser("trajectories", parents=[common], help="Monte Carlo position histogram")
    s.add_argument("--pol", choices=("y", "z'"), default="y")

    s = sub.add_parser("fluorescence", parents=[common], help="position-averaged fluorescence vs P_c")
    s.add_argument("--breakdown", action="store_true", help="per-transition columns")

    s = sub.add_parser("transmission", parents=[common], help="position-averaged transmission spectrum")
    s.add_argument("--power-uw", type=float, help="compensation power (uW); default: most symmetric")

    s = sub.add_parser("figures", parents=[common], help="regenerate figure panels")
    s.add_argument("--panel", action="append", choices=PANELS, help="panel id (repeatable; default all)")
    s.add_argument("--breakdown", action="store_true")

    s = sub.add_parser("validate", help="check a configuration without running anything")
    s.add_argument("--config", type=Path)
    return p


def _apply_overrides(cfg, args):
    kw = {}
    if getattr(args, "species", None) is not None:
        if not args.species.is_file():
            raise ConfigError([("species.path", f"file not found: {args.species}")])
        kw["species_path"] = args.species
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "n_per_energy", None) is not None:
        if args.n_per_energy < 1:
            raise ConfigError([("montecarlo.n_per_energy", "must be >= 1")])
        kw["n_per_energy"] = args.n_per_energy
    if getattr(args, "duration_us", None) is not None:
        if not args.duration_us > 0:
            raise ConfigError([("montecarlo.duration", "must be positive")])
        kw["duration"] = args.duration_us * 1e-6
    if getattr(args, "waist_ratio", None) is not None:
        if not args.waist_ratio > 0:
            raise ConfigError([("beams.compensation.waist_ratio", "must be positive")])
        kw["waist_ratio"] = args.waist_ratio
    if not kw:
        return cfg
    raw = dict(cfg.raw)
    raw["cli_overrides"] = {k: str(v) for k, v in sorted(kw.items())}
    return cfg.with_overrides(raw=raw, **kw)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "validate":
        errors = validate(args.config)
        if errors:
            for path, msg in errors:
                print(f"{path}: {msg}")
            return EXIT_CONFIG
        print("configuration OK")
        return EXIT_OK

    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.jobs < 1:
            raise ConfigError([("--jobs", "must be >= 1")])
        if getattr(args, "waist_ratio", None) is None:
            args.waist_ratio = cfg.waist_ratio if args.command in ("fluorescence", "figures") else 1.0
        out = args.output or (Path(os.environ[ENV_OUTPUT]) if os.environ.get(ENV_OUTPUT) else cfg.output_dir)
        model = Model(cfg, jobs=args.jobs)
        run = Run(Path(out), cfg, args.command, argv)
        COMMANDS[args.command](model, run, args)
        run.finish()
    except (ConfigError, SpeciesDataError) as exc:
        errs = getattr(exc, "errors", None) or [("", str(exc))]
        for path, msg in errs:
            print(f"config error: {path}: {msg}" if path else f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResonanceError, CutoffError, SaddlePointError, SingularLiouvillianError, UntrappedError) as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"outputs written to {run.dir}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
