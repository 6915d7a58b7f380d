"""Command-line front end: one subcommand per computed figure, each writing a run manifest.

Exit codes are 0 on success, 2 on invalid input and 3 on numerical failure.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Config, load_config
from .errors import NoStopbandError, NumericalError, ValidationError
from .estimation import SweepContext, exponential_deviation, fit_g4_sweep
from .filters import cascade_and_sparams, stopband_report
from .io import RunManifest, write_complex_series, write_json, write_table
from .lindblad import (adiabatic_gamma4, damped_rabi_rate, evolve, extract_decay_rate,
                       reduce_three_level, selectivity_guard, six_level_model)
from .rwa import DriveSpec, PumpSpec, dispersive_table, g4_rate
from .spectroscopy import (CutSpec, classical_curvature, local_minima, mode_ratios,
                           quantum_curvature, reflection_spectrum)

TWO_PI = 2 * np.pi
NON_EXPONENTIAL_THRESHOLD = 0.05


def _pool_map(fn, items, workers: int):
    """Ordered map; the result order never depends on scheduling."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _chi(cfg: Config, bump: int = 0):
    dyn = cfg.raw["dynamics"]
    n_dim, m_dim = (int(v) for v in dyn["rwa_dims"])
    params = cfg.circuit(readout=bool(dyn["include_readout"]), bump=bump)
    return dispersive_table(params.hamiltonian(cfg.bias()), max(n_dim, 5), max(m_dim, 2))


def _chi_change(cfg: Config, chi, bump: int) -> dict:
    if bump <= 0:
        return {}
    chi2 = _chi(cfg, bump)
    diff = max(abs(chi[k] - chi2[k]) for k in chi.chi)
    return {"truncation_bump": bump, "max_chi_change_rad_s": diff}


def _g4_values(cfg: Config, args) -> list:
    if getattr(args, "g4_khz", None):
        return [TWO_PI * 1e3 * g for g in args.g4_khz]
    return cfg.g4_list()


def _truncations(cfg: Config) -> dict:
    return {"modes": {k: int(v.get("dim", 8)) for k, v in cfg.raw["modes"].items()},
            "rwa_dims": list(cfg.raw["dynamics"]["rwa_dims"])}


# ---------------------------------------------------------------- commands

def cmd_decay(cfg: Config, args) -> RunManifest:
    chi = _chi(cfg)
    kb, kphi, gammas = cfg.rate("kappa_b"), cfg.rate("kappa_phi"), cfg.gammas()
    times = np.linspace(0.0, args.t_max_us * 1e-6, args.n_times)
    g4s = _g4_values(cfg, args)

    def run(g):
        m = six_level_model(chi, g, PumpSpec(0.0, cfg.rate("Delta")), DriveSpec(0.0, 0.0),
                            kb, gammas, kphi)
        proj = m.projector((4, 0))
        return evolve(m, proj, times, {"P4": proj}).expectations["P4"]

    pops = _pool_map(run, g4s, args.workers)
    man = RunManifest("decay", cfg.raw, _truncations(cfg), {"rtol": 1e-12, "atol": 1e-14})
    dev = []
    for j, (g, p) in enumerate(zip(g4s, pops)):
        out = _emit(args, f"decay_{j:02d}", "time", times, p)
        man.outputs.append(out.name)
        try:
            d = exponential_deviation(times, p.real)
        except (RuntimeError, ValidationError):
            d = None
        dev.append({"g4_rad_s": g, "exponential_deviation": d,
                    "non_exponential": d is not None and d > NON_EXPONENTIAL_THRESHOLD})
    man.results = {"amplitudes": dev, "non_exponential_threshold": NON_EXPONENTIAL_THRESHOLD,
                   **_chi_change(cfg, chi, args.truncation_bump)}
    return man


def cmd_gamma4(cfg: Config, args) -> RunManifest:
    kb, kphi = cfg.rate("kappa_b"), cfg.rate("kappa_phi")
    gamma4 = 0.0 if args.no_direct_loss else cfg.gammas()[3]
    g4s = TWO_PI * 1e3 * np.linspace(0.0, args.g4_max_khz, args.n_points)

    def run(g):
        return extract_decay_rate(reduce_three_level(g * np.sqrt(24), kb, gamma4, kphi),
                                  allow_zero=True)

    reduced = np.array(_pool_map(run, g4s, args.workers))
    rabi = np.array([damped_rabi_rate(g, kb) for g in g4s])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        adiab = np.array([24 * adiabatic_gamma4(g, kb) for g in g4s])
    man = RunManifest("gamma4", cfg.raw, {"reduced_basis": 4}, {"zero_tol": 1e-12})
    header = ["g4_rad_s", "gamma4_reduced", "gamma4_damped_rabi", "gamma4_adiabatic"]
    cols = [g4s, reduced, rabi, adiab]
    man.outputs.append(_emit_table(args, "gamma4", header, cols).name)
    man.results = {"kappa_b_over_2": kb / 2, "gamma4_direct": gamma4, "kappa_phi": kphi}
    return man


def cmd_spectrum(cfg: Config, args) -> RunManifest:
    chi = _chi(cfg)
    kb, kphi, gammas = cfg.rate("kappa_b"), cfg.rate("kappa_phi"), cfg.gammas()
    xi_b = cfg.rate("xi_b")
    kc = cfg.rate("kappa_c") if cfg.raw["dynamics"].get("kappa_c") is not None else kb
    deltas = TWO_PI * 1e6 * np.linspace(-args.span_mhz / 2, args.span_mhz / 2, args.n_delta)
    g4s = _g4_values(cfg, args)
    drive = DriveSpec(xi_b, 0.0)

    def run(g):
        m = six_level_model(chi, g, PumpSpec(0.0, cfg.rate("Delta")), drive, kb, gammas, kphi)
        return reflection_spectrum(m, drive, deltas, kc, method=args.method)

    spectra = _pool_map(run, g4s, args.workers)
    man = RunManifest("spectrum", cfg.raw, _truncations(cfg), {"kernel_tol": 1e-10})
    info = []
    for j, (g, r) in enumerate(zip(g4s, spectra)):
        man.outputs.append(_emit(args, f"spectrum_{j:02d}", "detuning", deltas, r).name)
        sel = selectivity_guard(chi, g, xi_b)
        info.append({"g4_rad_s": g, "n_minima": int(len(local_minima(np.abs(r)))),
                     "selectivity_worst": sel.worst_ratio, "selectivity_ok": sel.passed})
    man.results = {"amplitudes": info, "method": args.method,
                   **_chi_change(cfg, chi, args.truncation_bump)}
    return man


def cmd_curvature(cfg: Config, args) -> RunManifest:
    params = cfg.circuit(readout=True)
    if args.zpf_scale != 1.0:
        params = params.scaled_zpf(args.zpf_scale)
    if args.ideal:
        params = replace(params, squid=replace(params.squid, E_delta=0.0, eps_L=np.inf),
                         chains=None)
    thetas = args.theta if args.theta else [0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4]
    saddles = args.saddle or ["SP1", "SP2"]
    omegas = [m.omega for m in params.modes]
    ratios = mode_ratios(params)
    jobs = [(s, t) for s in saddles for t in thetas]

    def run(job, p=params):
        s, t = job
        cut = CutSpec.symmetric(t, args.half_width, args.n_points, s)
        return quantum_curvature(p, cut, operators=p.operators()).curvature

    quantum = _pool_map(run, jobs, args.workers)
    rows = []
    for (s, t), q in zip(jobs, quantum):
        cl = classical_curvature(omegas, ratios, t, s)
        for i, m in enumerate(params.modes):
            rows.append([s, t, m.label, cl[i], q[m.label]])
    man = RunManifest("curvature", cfg.raw,
                      {"modes": {m.label: m.dim for m in params.modes}}, {"fit_fraction": 0.5})
    header = ["saddle", "theta", "mode", "classical", "quantum"]
    man.outputs.append(_emit_table(args, "curvature", header, list(zip(*rows))).name)
    if args.truncation_bump > 0:
        bumped = params.bumped(args.truncation_bump)
        qb = _pool_map(lambda j: run(j, bumped), jobs, args.workers)
        change = max(abs(q[k] - b[k]) / max(abs(q[k]), 1e-30)
                     for q, b in zip(quantum, qb) for k in q if abs(q[k]) > 1e3)
        man.results["truncation_bump"] = args.truncation_bump
        man.results["max_relative_curvature_change"] = change
    return man


def cmd_filter(cfg: Config, args) -> RunManifest:
    prof = cfg.line_profile(args.n_periods, uniform=args.uniform)
    two = cascade_and_sparams(prof, cfg.sweep_omega())
    f = two.omega / TWO_PI
    man = RunManifest("filter", cfg.raw, {"cells": prof.n_cells},
                      {"min_cells_per_wavelength": 40})
    name = _emit_table(args, "filter", ["frequency_hz", "s21_db", "s11_db"],
                       [f, two.s21_db, two.s11_db])
    man.outputs.append(name.name)
    band = cfg.raw["filter"]["band"]
    res = {"unitarity_error": two.unitarity_error(),
           "in_band_max_s21_db": two.max_s21_db(band[0] * 1e9, band[1] * 1e9)}
    try:
        rep = stopband_report(two)
        res.update(stopband_center_hz=rep.center, stopband_width_hz=rep.width,
                   min_s21_db=rep.min_s21_db, edge_clipped=rep.edge_clipped)
    except NoStopbandError:
        res["stopband"] = None
    man.results = res
    return man


def cmd_fit(cfg: Config, args) -> RunManifest:
    from .io import read_series

    if len(args.decay) != len(args.spectrum):
        raise ValidationError("give one spectrum file per decay file")
    decays = [read_series(p) for p in args.decay]
    spectra = [read_series(p) for p in args.spectrum]
    decays = [(t, np.real(y)) for t, y in decays]
    ctx = SweepContext(_chi(cfg), cfg.rate("kappa_b"), cfg.gammas(), None, cfg.rate("Delta"))
    fit = fit_g4_sweep(decays, spectra, ctx, n_starts=args.starts, seed=args.seed)
    res = fit.result
    report = {"g4_rad_s": fit.g4, "kappa_phi_rad_s": fit.kappa_phi,
              "signal_scale": fit.signal_scale, "line_scale": fit.line_scale,
              "xi_b_rad_s": fit.xi_b, "stderr": fit.stderr, "covariance": res.covariance,
              "parameter_names": list(res.params), "cost": res.cost, "converged": res.converged,
              "iterations": res.iterations, "residuals": res.residuals,
              "fast_full_discrepancy": fit.fast_full_discrepancy, "flagged": fit.flagged}
    out = write_json(Path(args.out) / "fit_report.json", report)
    man = RunManifest("fit", cfg.raw, _truncations(cfg), {"tol": 1e-12})
    man.outputs.append(out.name)
    man.results = {"converged": res.converged, "flagged": fit.flagged}
    return man


def cmd_g4rate(cfg: Config, args) -> RunManifest:
    params = cfg.circuit(readout=False)
    g = g4_rate(params.squid, params.mode("a").phi_zpf, params.mode("b").phi_zpf,
                PumpSpec(args.xi), leading_order=args.leading_order)
    print(f"g4/2pi = {g / TWO_PI:.6g} Hz")
    man = RunManifest("g4rate", cfg.raw, {}, {})
    man.results = {"xi": args.xi, "g4_rad_s": g, "g4_hz": g / TWO_PI}
    man.outputs.append(_emit_table(args, "g4rate", ["xi", "g4_rad_s"], [[args.xi], [g]]).name)
    return man


# ---------------------------------------------------------------- plumbing

def _emit(args, stem: str, x_name: str, x, values) -> Path:
    out = Path(args.out)
    if args.format == "json":
        v = np.asarray(values, dtype=complex)
        return write_json(out / f"{stem}.json", {x_name: x, "real": v.real, "imag": v.imag})
    return write_complex_series(out / f"{stem}.csv", x_name, x, values)


def _emit_table(args, stem: str, header, cols) -> Path:
    out = Path(args.out)
    if args.format == "json":
        return write_json(out / f"{stem}.json", {h: list(c) for h, c in zip(header, cols)})
    return write_table(out / f"{stem}.csv", header, cols)


COMMANDS = {"decay": cmd_decay, "gamma4": cmd_gamma4, "spectrum": cmd_spectrum,
            "curvature": cmd_curvature, "filter": cmd_filter, "fit": cmd_fit,
            "g4rate": cmd_g4rate}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML or JSON config file")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--truncation-bump", type=int, default=0,
                        help="repeat with K extra levels per mode and report the change")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="quartet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("decay", parents=[common], help="|4,0> population versus time")
    s.add_argument("--g4-khz", type=float, nargs="+")
    s.add_argument("--t-max-us", type=float, default=10.0)
    s.add_argument("--n-times", type=int, default=401)

    s = sub.add_parser("gamma4", parents=[common], help="decay rate versus exchange rate")
    s.add_argument("--g4-max-khz", type=float, default=300.0)
    s.add_argument("--n-points", type=int, default=50)
    s.add_argument("--no-direct-loss", action="store_true", help="set the |4> relaxation to 0")

    s = sub.add_parser("spectrum", parents=[common], help="buffer reflection spectra")
    s.add_argument("--g4-khz", type=float, nargs="+")
    s.add_argument("--span-mhz", type=float, default=4.0)
    s.add_argument("--n-delta", type=int, default=101)
    s.add_argument("--method", choices=("full", "adjoint"), default="full")

    s = sub.add_parser("curvature", parents=[common], help="flux-map curvatures at the saddles")
    s.add_argument("--theta", type=float, nargs="+")
    s.add_argument("--saddle", choices=("SP1", "SP2"), nargs="+")
    s.add_argument("--zpf-scale", type=float, default=1.0)
    s.add_argument("--half-width", type=float, default=0.04)
    s.add_argument("--n-points", type=int, default=21)
    s.add_argument("--ideal", action="store_true",
                   help="drop junction asymmetry, stray inductance and chains")

    s = sub.add_parser("filter", parents=[common], help="S-parameters of a modulated line")
    s.add_argument("--n-periods", type=int, default=None)
    s.add_argument("--uniform", action="store_true")

    s = sub.add_parser("fit", parents=[common], help="joint fit of decay and spectrum data")
    s.add_argument("--decay", type=Path, nargs="+", required=True)
    s.add_argument("--spectrum", type=Path, nargs="+", required=True)
    s.add_argument("--starts", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("g4rate", parents=[common], help="exchange rate for a pump amplitude")
    s.add_argument("--xi", type=float, default=0.0175)
    s.add_argument("--leading-order", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1 or args.truncation_bump < 0:
            raise ValidationError("--workers must be >= 1 and --truncation-bump >= 0")
        cfg = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        man = COMMANDS[args.command](cfg, args)
        man.arguments = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
        man.write(args.out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
