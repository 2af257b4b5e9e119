"""Command-line orchestrator: steady-scan, fisher, collapse, detector-demo,
kappa-fit, replay.

Every output CSV embeds the package version and the configuration hash as
'#' comment lines; runs write a manifest.json with the seed derivation and
completion status.  Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 partial completion above the failure threshold.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .. import __version__
from ..collapse import (
    CollapseDataset,
    NoOverlapError,
    collapse_measure,
    optimize_collapse,
    quality_factor,
)
from ..dynamics import (
    KappaFitError,
    LeakageError,
    fit_effective_kappa,
    rabi_lindblad_model,
    save_records,
    load_records,
    steady_state,
    two_ion_lindblad_model,
)
from ..dynamics.trajectories import TrajectorySpec, ancilla_spec, noisy_spec, perfect_spec
from ..ensemble import run_ensemble
from ..hilbert import HilbertSpec, default_fock_dim, expectation, number_operator
from ..inference import DeltaTooLargeError, estimate_fisher, fisher_from_records
from ..models import critical_coupling, effective_kappa_analytic, emitted_per_phonon, \
    enhancement_factor, tune_to_cp
from .config import ConfigError, ExperimentConfig, load_config
from . import plots

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

FAILURE_THRESHOLD = 0.01  # quarantined fraction that fails a run


def _header_lines(cfg_hash: str, extra: dict | None = None) -> str:
    lines = [f"# rabisense {__version__}", f"# config_hash={cfg_hash}"]
    for key, val in (extra or {}).items():
        lines.append(f"# {key}={val}")
    return "\n".join(lines) + "\n"


def _write_text(path, text) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_manifest(out_dir, payload) -> None:
    payload = dict(payload, version=__version__)
    _write_text(os.path.join(out_dir, "manifest.json"),
                json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def _out_dir(cfg: ExperimentConfig, command: str) -> str:
    return cfg.run.get("out_dir", os.path.join("runs", command))


def _workers(cfg: ExperimentConfig) -> int:
    w = cfg.run.get("workers", 0)
    return w if w > 0 else (os.cpu_count() or 1)


def _checkpoint_times(cfg: ExperimentConfig, t_final: float) -> np.ndarray:
    ck = cfg.run.get("checkpoints", 40)
    if isinstance(ck, int):
        return np.linspace(t_final / ck, t_final, ck)
    return np.asarray([float(t) for t in ck])


def _build_spec(cfg: ExperimentConfig, eta: float) -> TrajectorySpec:
    model = cfg.model
    omega = float(model.get("omega", 1.0))
    kappa = float(model.get("kappa", 0.0))
    g_over_gc = float(model.get("g_over_gc", 1.0))
    fock = int(model.get("fock_dim", 0)) or default_fock_dim(eta)
    initial_fock = int(model.get("initial_fock", 0))
    t_final = float(cfg.run.get("t_final", 10.0))
    dt = float(cfg.run.get("dt", 1e-3))
    if cfg.scheme == "ancilla":
        kappa_eff = fit_effective_kappa(cfg.ancilla).kappa
        params = tune_to_cp(omega, eta, kappa_eff, g_over_gc)
        return ancilla_spec(params, cfg.ancilla, t_final, dt, fock, initial_fock)
    params = tune_to_cp(omega, eta, kappa, g_over_gc)
    if cfg.scheme == "noisy":
        return noisy_spec(params, cfg.noise, t_final, dt, fock, initial_fock)
    return perfect_spec(params, t_final, dt, fock, initial_fock)


# ---------------------------------------------------------------------------
# subcommands


def cmd_steady_scan(cfg: ExperimentConfig) -> int:
    etas = cfg.scan.get("eta_list")
    if not etas:
        raise ConfigError("steady-scan needs [scan] eta_list")
    omega = float(cfg.model.get("omega", 1.0))
    kappa = float(cfg.model.get("kappa", 0.0))
    g_over_gc = float(cfg.model.get("g_over_gc", 1.0))
    two_ion = bool(cfg.scan.get("two_ion", False))
    if two_ion and cfg.ancilla is None:
        raise ConfigError("[scan] two_ion = true needs an [ancilla] section")
    if two_ion:
        kappa = fit_effective_kappa(cfg.ancilla).kappa
    if kappa <= 0:
        raise ConfigError(
            "steady-scan needs kappa > 0: the closed model has no steady state "
            "at the critical point")

    out = _out_dir(cfg, "steady_scan")
    t0 = time.time()
    rows = []
    for eta in etas:
        eta = float(eta)
        fock = int(cfg.model.get("fock_dim", 0)) or default_fock_dim(eta)
        params = tune_to_cp(omega, eta, kappa, g_over_gc)
        space = HilbertSpec(fock, has_system_qubit=True)
        rho = steady_state(rabi_lindblad_model(params, space))
        nbar = expectation(rho, number_operator(space))
        row = {"eta": eta, "nbar": nbar}
        if two_ion:
            space2 = HilbertSpec(fock, has_system_qubit=True, has_ancilla=True)
            rho2 = steady_state(two_ion_lindblad_model(params, cfg.ancilla, space2))
            row["nbar_two_ion"] = expectation(rho2, number_operator(space2))
        rows.append(row)
        print(f"eta={eta:g}: nbar={nbar:.6g}"
              + (f" two-ion={row['nbar_two_ion']:.6g}" if two_ion else ""))

    etas_arr = np.array([r["eta"] for r in rows])
    nbars = np.array([r["nbar"] for r in rows])
    slope = float(np.polyfit(np.log(etas_arr), np.log(nbars), 1)[0])
    print(f"fitted slope of ln<n> vs ln eta: {slope:.4f}")

    cols = ["eta", "nbar"] + (["nbar_two_ion"] if two_ion else [])
    body = ",".join(cols) + "\n"
    for r in rows:
        body += ",".join(f"{r[c]:.17g}" for c in cols) + "\n"
    _write_text(os.path.join(out, "steady_scan.csv"),
                _header_lines(cfg.config_hash(), {"slope": f"{slope:.17g}",
                                                  "kappa": f"{kappa:.17g}"}) + body)
    plots.plot_steady_scan(
        os.path.join(out, "steady_scan.svg"), etas_arr, nbars, slope,
        extra=np.array([r["nbar_two_ion"] for r in rows]) if two_ion else None)
    _write_manifest(out, {
        "command": "steady-scan", "config_hash": cfg.config_hash(),
        "slope": slope, "kappa": kappa, "timing_s": time.time() - t0,
        "completed": True,
    })
    return EXIT_OK


def cmd_fisher(cfg: ExperimentConfig) -> int:
    n_traj = int(cfg.run.get("n_traj", 0))
    if n_traj < 1:
        raise ConfigError("[run] n_traj must be at least 1")
    master = int(cfg.run.get("master_seed", 0))
    delta = float(cfg.run.get("delta_omega", 0.0)) or None
    save = bool(cfg.run.get("save_records", True))
    richardson = bool(cfg.run.get("richardson", True))
    out = _out_dir(cfg, "fisher")
    t0 = time.time()

    results = []
    quarantined_total = 0
    for eta in cfg.eta_values:
        spec = _build_spec(cfg, eta)
        times = _checkpoint_times(cfg, spec.n_steps * spec.dt)
        est = estimate_fisher(
            spec, times, n_traj, delta, master,
            richardson=richardson,
            block_size=int(cfg.run.get("block_size", 256)),
            workers=_workers(cfg),
            cache_dir=os.path.join(out, f"blocks_eta{eta:g}"))
        quarantined_total += est.n_quarantined
        frac = est.n_quarantined / n_traj
        tag = f"eta{eta:g}"
        extra = {"eta": f"{eta:g}", "kappa": f"{spec.rabi.kappa:.17g}",
                 "master_seed": master}
        _write_text(os.path.join(out, f"fisher_{tag}.csv"),
                    _header_lines(cfg.config_hash(), extra) + est.to_csv())
        _write_text(os.path.join(out, f"fisher_{tag}_diagnostics.csv"),
                    _header_lines(cfg.config_hash(), extra) + est.diagnostics_to_csv())
        if save:
            save_records(os.path.join(out, f"records_{tag}.bin"),
                         est.ensemble.records())
        results.append((eta, spec, est))
        print(f"eta={eta:g}: F(t_final)={est.fi_values[-1]:.5g} "
              f"± {est.std_errors[-1]:.2g} ({est.n_trajectories} valid, "
              f"{est.n_quarantined} quarantined)")
        if frac > FAILURE_THRESHOLD:
            print(f"failure fraction {frac:.2%} above threshold", file=sys.stderr)

    curves = [(f"η={eta:g}", spec.rabi.kappa * est.t_checkpoints, est.fi_values,
               est.std_errors) for eta, spec, est in results]
    plots.plot_fisher(os.path.join(out, "fisher.svg"), curves)

    if len(results) > 1:
        triples = []
        for eta, spec, est in results:
            kt = spec.rabi.kappa * est.t_checkpoints
            for h, fi, se in zip(kt, est.fi_values, est.std_errors):
                if h > 0 and fi > 0:
                    triples.append((eta, h, fi, se))
        dataset = CollapseDataset.from_points(triples)
        _write_text(os.path.join(out, "collapse_dataset.csv"),
                    _header_lines(cfg.config_hash()) + dataset.to_csv())
        plots.plot_collapse(os.path.join(out, "collapse.svg"), dataset, 2.0, 1.0,
                            measure=collapse_measure(dataset, 2.0, 1.0).measure)

    frac = quarantined_total / (n_traj * len(results))
    _write_manifest(out, {
        "command": "fisher", "config_hash": cfg.config_hash(),
        "seed_derivation": "philox key=master_seed, counter=index·2^128",
        "master_seed": master, "n_traj": n_traj,
        "eta": cfg.eta_values, "quarantined": quarantined_total,
        "timing_s": time.time() - t0, "completed": True,
    })
    return EXIT_PARTIAL if frac > FAILURE_THRESHOLD else EXIT_OK


def _read_fisher_csv(path):
    meta = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(dict(zip(header, line.split(","))))
    if "eta" not in meta or "kappa" not in meta:
        raise ConfigError(f"{path}: missing '# eta=' / '# kappa=' metadata")
    return float(meta["eta"]), float(meta["kappa"]), rows


def cmd_collapse(args) -> int:
    if len(args.inputs) < 2:
        raise ConfigError("collapse needs at least two Fisher CSV inputs")
    triples = []
    etas = set()
    for path in args.inputs:
        eta, kappa, rows = _read_fisher_csv(path)
        if eta in etas:
            raise ConfigError(f"duplicate eta {eta:g} across inputs")
        etas.add(eta)
        for row in rows:
            t, fi, se = float(row["t"]), float(row["fi"]), float(row["std_err"])
            if t > 0 and fi > 0:
                triples.append((eta, kappa * t, fi, se))
    dataset = CollapseDataset.from_points(triples)

    out = args.out
    t0 = time.time()
    a, b = args.exponents
    lines = ["quantity,value"]
    if args.optimize:
        res = optimize_collapse(dataset, a_range=tuple(args.a_range),
                                b_range=tuple(args.b_range))
        lines += [f"a_opt,{res.a:.17g}", f"b_opt,{res.b:.17g}",
                  f"M_opt,{res.measure:.17g}", f"n_overlap,{res.n_overlap}"]
        if res.boundary_warning:
            print("warning: optimal exponents at the range boundary", file=sys.stderr)
        print(f"optimized exponents: a={res.a:.4f}, b={res.b:.4f}, M={res.measure:.4g}")
    fixed = collapse_measure(dataset, a, b)
    lines += [f"a_fixed,{a:.17g}", f"b_fixed,{b:.17g}",
              f"M_fixed,{fixed.measure:.17g}"]
    qval = None
    if args.ideal:
        ideal_triples = []
        for path in args.ideal:
            eta, kappa, rows = _read_fisher_csv(path)
            for row in rows:
                t, fi = float(row["t"]), float(row["fi"])
                if t > 0 and fi > 0:
                    ideal_triples.append((eta, kappa * t, fi))
        ideal = CollapseDataset.from_points(ideal_triples)
        qval = quality_factor(dataset, ideal, a, b)
        lines.append(f"Q,{qval:.17g}")
        print(f"quality factor Q = {qval:.4f} at (a={a:g}, b={b:g})")

    _write_text(os.path.join(out, "collapse_result.csv"),
                _header_lines("-", {"inputs": ";".join(args.inputs)})
                + "\n".join(lines) + "\n")
    best_a, best_b = (res.a, res.b) if args.optimize else (a, b)
    plots.plot_collapse(os.path.join(out, "collapsed.svg"), dataset,
                        best_a, best_b,
                        measure=(res.measure if args.optimize else fixed.measure))
    _write_manifest(out, {
        "command": "collapse", "inputs": args.inputs, "Q": qval,
        "timing_s": time.time() - t0, "completed": True,
    })
    return EXIT_OK


def cmd_detector_demo(cfg: ExperimentConfig) -> int:
    if cfg.ancilla is None:
        raise ConfigError("detector-demo needs an [ancilla] section")
    initial_n = int(cfg.model.get("initial_fock", 1))
    fock = int(cfg.model.get("fock_dim", 0)) or max(initial_n + 3, 4)
    t_final = float(cfg.run.get("t_final", 0.0))
    if t_final <= 0:
        kappa_est = max(effective_kappa_analytic(cfg.ancilla), 1e-12)
        t_final = 2.5 / kappa_est
    dt = float(cfg.run.get("dt", 0.0))
    if dt <= 0:
        dt = 0.01 / max(cfg.ancilla.epsilon * cfg.ancilla.Gamma_s, 1e-12)
    n_traj = int(cfg.run.get("n_traj", 16))
    master = int(cfg.run.get("master_seed", 0))
    out = _out_dir(cfg, "detector_demo")
    t0 = time.time()

    spec = ancilla_spec(None, cfg.ancilla, t_final, dt, fock,
                        initial_fock=initial_n, include_system=False)
    steps = np.unique(np.linspace(0, spec.n_steps, 201).astype(np.int64))
    ens = run_ensemble(spec, n_traj, steps, master,
                       block_size=int(cfg.run.get("block_size", 256)),
                       workers=0)

    # first seed carries the displayed staircase
    counts0 = np.searchsorted(ens.events[0], steps, side="right")
    annihilated = ens.nbar[0] - ens.nbar[-1]
    detected = ens.n_jumps.astype(float)
    n_ph = float(detected.sum() / max(annihilated.sum(), 1e-12))
    print(f"empirical N_ph = {n_ph:.3f} over {n_traj} seeds "
          f"(detected {int(detected.sum())}, annihilated {annihilated.sum():.2f})")
    print(f"Eq. prediction: N_ph = {enhancement_factor(cfg.ancilla):.3f}, "
          f"N_em = {emitted_per_phonon(cfg.ancilla):.3f}")

    body = "t,detections,nbar\n"
    for t, c, nb in zip(ens.times, counts0, ens.nbar[:, 0]):
        body += f"{t:.17g},{int(c)},{nb:.17g}\n"
    _write_text(os.path.join(out, "detector_demo.csv"),
                _header_lines(cfg.config_hash(),
                              {"n_ph_empirical": f"{n_ph:.17g}",
                               "n_ph_predicted": f"{enhancement_factor(cfg.ancilla):.17g}",
                               "n_em_predicted": f"{emitted_per_phonon(cfg.ancilla):.17g}"})
                + body)
    plots.plot_detector_demo(os.path.join(out, "detector_demo.svg"),
                             ens.times, counts0, ens.nbar[:, 0])
    _write_manifest(out, {
        "command": "detector-demo", "config_hash": cfg.config_hash(),
        "n_ph_empirical": n_ph, "master_seed": master,
        "timing_s": time.time() - t0, "completed": True,
    })
    return EXIT_OK


def cmd_kappa_fit(cfg: ExperimentConfig) -> int:
    if cfg.ancilla is None:
        raise ConfigError("kappa-fit needs an [ancilla] section")
    anc = cfg.ancilla
    initial_n = int(cfg.kappa_fit.get("initial_n", 1))
    n_points = int(cfg.kappa_fit.get("sweep_points", 5))
    factor = float(cfg.kappa_fit.get("sweep_factor", 1.45))
    out = _out_dir(cfg, "kappa_fit")
    t0 = time.time()

    base = fit_effective_kappa(anc, initial_n=initial_n)
    print(f"base point: kappa = {base.kappa:.6g} (R² = {base.r_squared:.5f}; "
          f"analytic estimate {effective_kappa_analytic(anc):.6g})")

    sweeps = {}
    rows = ["parameter,value,kappa_fit,kappa_analytic,r_squared"]
    slopes = {}
    # sweep away from the strong/weak regime boundary: weak drive downward,
    # strong drive and strong decay upward
    directions = {"Omega_w": -1.0, "Omega_s": +1.0, "Gamma_s": +1.0}
    for name in ("Omega_w", "Omega_s", "Gamma_s"):
        exps = directions[name] * np.arange(n_points)
        vals, fits, analytic = [], [], []
        for e in exps:
            scale = factor ** e
            params = {**vars(anc), name: getattr(anc, name) * scale}
            candidate = type(anc)(**params)
            if not candidate.regime_ok():
                continue
            try:
                fit = fit_effective_kappa(candidate, initial_n=initial_n)
            except KappaFitError:
                continue
            vals.append(getattr(candidate, name))
            fits.append(fit.kappa)
            analytic.append(effective_kappa_analytic(candidate))
            rows.append(f"{name},{vals[-1]:.17g},{fits[-1]:.17g},"
                        f"{analytic[-1]:.17g},{fit.r_squared:.17g}")
        if len(vals) >= 3:
            slope = float(np.polyfit(np.log(vals), np.log(fits), 1)[0])
            slopes[name] = slope
            sweeps[name] = (np.array(vals), np.array(fits), np.array(analytic))
            print(f"kappa vs {name}: log-log slope {slope:+.3f} over {len(vals)} points")

    _write_text(os.path.join(out, "kappa_fit.csv"),
                _header_lines(cfg.config_hash(),
                              {"kappa_base": f"{base.kappa:.17g}",
                               **{f"slope_{k}": f"{v:.17g}" for k, v in slopes.items()}})
                + "\n".join(rows) + "\n")
    if sweeps:
        plots.plot_kappa_trends(os.path.join(out, "kappa_fit.svg"), sweeps)
    _write_manifest(out, {
        "command": "kappa-fit", "config_hash": cfg.config_hash(),
        "kappa_base": base.kappa, "slopes": slopes,
        "timing_s": time.time() - t0, "completed": True,
    })
    return EXIT_OK


def cmd_replay(args) -> int:
    records = load_records(args.records)
    if not records:
        raise ConfigError(f"{args.records} holds no records")
    est = fisher_from_records(records, delta=args.delta, parameter=args.parameter)
    out = args.out
    _write_text(os.path.join(out, "fisher_replay.csv"),
                _header_lines("-", {"records": args.records,
                                    "delta": f"{args.delta:.17g}"}) + est.to_csv())
    _write_text(os.path.join(out, "fisher_replay_diagnostics.csv"),
                _header_lines("-") + est.diagnostics_to_csv())
    print(f"replayed {est.n_trajectories} records at delta={args.delta:g}: "
          f"F(t_final) = {est.fi_values[-1]:.5g} ± {est.std_errors[-1]:.2g}")
    _write_manifest(out, {
        "command": "replay", "records": args.records, "delta": args.delta,
        "completed": True,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rabisense",
        description="Continuously monitored open-Rabi-model sensor toolkit")
    parser.add_argument("--version", action="version",
                        version=f"rabisense {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("steady-scan", "fisher", "detector-demo", "kappa-fit"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment config")

    p = sub.add_parser("collapse")
    p.add_argument("inputs", nargs="+", help="Fisher CSV files (distinct eta)")
    p.add_argument("--out", required=True)
    p.add_argument("--a-range", nargs=2, type=float, default=[1.4, 2.6])
    p.add_argument("--b-range", nargs=2, type=float, default=[0.5, 1.5])
    p.add_argument("--exponents", nargs=2, type=float, default=[2.0, 1.0],
                   help="fixed exponents for M and Q")
    p.add_argument("--ideal", nargs="*", default=None,
                   help="Fisher CSVs of the noiseless reference (enables Q)")
    p.add_argument("--no-optimize", dest="optimize", action="store_false")

    p = sub.add_parser("replay")
    p.add_argument("--records", required=True, help="binary record container")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--parameter", default="omega")
    p.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "collapse":
            return cmd_collapse(args)
        if args.command == "replay":
            return cmd_replay(args)
        cfg = load_config(args.config)
        if args.command == "steady-scan":
            return cmd_steady_scan(cfg)
        if args.command == "fisher":
            return cmd_fisher(cfg)
        if args.command == "detector-demo":
            return cmd_detector_demo(cfg)
        if args.command == "kappa-fit":
            return cmd_kappa_fit(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LeakageError, KappaFitError, DeltaTooLargeError, NoOverlapError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
