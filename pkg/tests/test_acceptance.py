"""Acceptance criteria, one test per criterion (criterion 6 split in two).

Each test prints an `ACCEPTANCE <n> <PASS|FAIL> <detail>` line.  The default
run uses the desk-scale (smoke) variants of the trajectory-heavy criteria;
RABISENSE_FULL=1 switches criteria 6-8 to their full-size versions.

Criterion 6's transient-exponent clause is implemented verbatim and is an
expected honest failure of this implementation; the measurement chain and
blocking analysis live in the decisions ledger outside the package.
"""

import itertools
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from rabisense.collapse import (
    CollapseDataset,
    CollapseSet,
    collapse_measure,
    collapse_measure_known,
    optimize_collapse,
    quality_factor,
)
from rabisense.dynamics import (
    ancilla_spec,
    evolve_lindblad,
    fit_effective_kappa,
    noisy_spec,
    perfect_spec,
    rabi_lindblad_model,
    run_block,
    steady_state,
    two_ion_lindblad_model,
)
from rabisense.ensemble import run_ensemble
from rabisense.hilbert import (
    HilbertSpec,
    default_fock_dim,
    expectation,
    fock_state,
    number_operator,
)
from rabisense.inference import estimate_fisher
from rabisense.models import (
    AncillaParams,
    NoiseParams,
    RabiParams,
    effective_kappa_analytic,
    tune_to_cp,
)

FULL = os.environ.get("RABISENSE_FULL", "") == "1"

FIG_S1 = AncillaParams(Omega_s=160.0, Omega_w=14.3, Gamma_s=80.0, Gamma_w=1.0,
                       eta_ld2=0.07)
FIG_S2 = AncillaParams(Omega_s=6400.0, Omega_w=572.0, Gamma_s=3200.0,
                       Gamma_w=40.0, eta_ld2=0.07)


def report(criterion, ok, detail):
    print(f"\nACCEPTANCE {criterion} {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def ensemble_vs_lindblad(spec, n_traj, seed, abs_tol=None):
    """Max z-scores of ⟨n̂⟩ and ⟨σ_z⟩ against the unconditional solution."""
    ck = np.linspace(0, spec.n_steps, 11).astype(int)
    blk = run_block(spec, seed, 0, n_traj, ck)
    lme = evolve_lindblad(spec.lindblad_model(),
                          fock_state(spec.space, spec.initial_fock, 0, 0),
                          spec.n_steps * spec.dt, spec.dt,
                          store_every=spec.n_steps // 10)
    n_op = number_operator(spec.space)
    n_ref = np.array([expectation(s, n_op) for s in lme.states])
    from rabisense.hilbert import build_pauli
    z_op = build_pauli(spec.space, "z")
    z_ref = np.array([expectation(s, z_op) for s in lme.states])
    if abs_tol is not None:  # deterministic variant (zero ensemble variance)
        return max(np.abs(blk.nbar[:, 0] - n_ref).max(),
                   np.abs(blk.sz[:, 0] - z_ref).max()) / abs_tol
    zn = np.abs(blk.nbar.mean(axis=1) - n_ref) / np.maximum(
        blk.nbar.std(axis=1, ddof=1) / np.sqrt(n_traj), 1e-12)
    zz = np.abs(blk.sz.mean(axis=1) - z_ref) / np.maximum(
        blk.sz.std(axis=1, ddof=1) / np.sqrt(n_traj), 1e-12)
    return max(zn.max(), zz.max()) / 3.0  # in units of the 3-SE budget


def test_c01_unraveling_consistency():
    """Ensemble average of 2e3 trajectories matches the Lindblad solution
    within 3 SE at 10 checkpoints for every scheme (fock_dim <= 8)."""
    n = 2000
    worst = {}
    # perfect and noisy schemes share the sensor parameters
    rabi = tune_to_cp(1.0, 3.0, 0.3, g_over_gc=0.5)
    worst["perfect"] = ensemble_vs_lindblad(
        perfect_spec(rabi, 6.0, 4e-3, 8), n, seed=55)
    noise = NoiseParams(gamma_dph=0.01, gamma_m=0.02, gamma_h=0.02, gamma_c=0.02)
    worst["noisy"] = ensemble_vs_lindblad(
        noisy_spec(rabi, noise, 6.0, 4e-3, 8), n, seed=31)
    anc_rabi = tune_to_cp(1.0, 4.0, 0.1, g_over_gc=0.3)
    for eps in (0.0, 0.5, 1.0):
        anc = AncillaParams(Omega_s=20.0, Omega_w=4.0, Gamma_s=10.0,
                            Gamma_w=1.0, eta_ld2=0.5, epsilon=eps)
        spec = ancilla_spec(anc_rabi, anc, 4.5, 3e-3, 7, initial_fock=1)
        if eps == 0.0:  # deterministic: direct comparison at 5e-3 tolerance
            worst[f"ancilla_eps{eps:g}"] = ensemble_vs_lindblad(
                spec, 2, seed=2024, abs_tol=5e-3)
        else:
            worst[f"ancilla_eps{eps:g}"] = ensemble_vs_lindblad(spec, n, seed=2024)
    detail = " ".join(f"{k}={v:.2f}" for k, v in worst.items())
    ok = all(v < 1.0 for v in worst.values())
    assert report(1, ok, f"(budget fractions) {detail}")


def test_c02_censored_exponential_fisher_oracle():
    """Pure-decay κ-estimation FI matches (1 − e^(−2κt))/κ² within 3 SE."""
    decay = RabiParams(0.0, 0.0, 0.0, kappa=1.0)
    spec = perfect_spec(decay, 2.0, 1e-3, 3, initial_fock=1)
    est = estimate_fisher(spec, [0.25, 0.5, 1.0, 2.0], n_traj=10000,
                          delta=1e-3, master_seed=77, parameter="kappa")
    oracle = (1.0 - np.exp(-2.0 * est.t_checkpoints))
    z = np.abs(est.fi_values - oracle) / est.std_errors
    ok = z.max() < 3.0
    assert report(2, ok, f"max |z| = {z.max():.2f} at 1e4 records")


def test_c03_engineered_dissipation():
    """Fitted detector-induced decay = 1.5e-3 Γ_w within 10%; quadratic
    drive trends within ±0.2 on log-log."""
    fit = fit_effective_kappa(FIG_S1, initial_n=1)
    base_ok = abs(fit.kappa / 1.5e-3 - 1.0) < 0.10
    est = effective_kappa_analytic(FIG_S1)
    analytic_ok = 1.5e-3 / 3 < est < 1.5e-3 * 3

    def sweep(name, factors):
        vals, ks = [], []
        for f in factors:
            params = {**vars(FIG_S1), name: getattr(FIG_S1, name) * f}
            ks.append(fit_effective_kappa(AncillaParams(**params), initial_n=1).kappa)
            vals.append(getattr(FIG_S1, name) * f)
        return np.polyfit(np.log(vals), np.log(ks), 1)[0]

    slope_w = sweep("Omega_w", (0.5, 0.73, 1.0))
    slope_s = sweep("Omega_s", (1.0, 1.4, 2.0))
    ok = (base_ok and analytic_ok and abs(slope_w - 2.0) < 0.2
          and abs(slope_s + 2.0) < 0.2)
    assert report(3, ok, f"kappa={fit.kappa:.4e} (paper 1.5e-3), "
                         f"slopes {slope_w:+.2f}/{slope_s:+.2f}")


def test_c04_two_ion_fidelity():
    """Full system+detector model reproduces the reduced damped-Rabi model:
    ⟨n̂⟩ dynamics within 5% at η=50, ω=0.6, and steady occupations within 5%
    for η ∈ {10, 20, 30}."""
    kappa = fit_effective_kappa(FIG_S2, initial_n=1).kappa
    omega = 0.6
    params = tune_to_cp(omega, 50.0, kappa)
    t_final = 0.75 / kappa
    fock = 18
    n_pts = 24
    dt_store = t_final / n_pts
    s2 = HilbertSpec(fock, has_system_qubit=True, has_ancilla=True)
    evo2 = evolve_lindblad(two_ion_lindblad_model(params, FIG_S2, s2),
                           fock_state(s2, 0, 0, 0), t_final, dt_store)
    n2 = np.array([expectation(s, number_operator(s2)) for s in evo2.states])
    s1 = HilbertSpec(fock, has_system_qubit=True)
    evo1 = evolve_lindblad(rabi_lindblad_model(params, s1),
                           fock_state(s1, 0, 0, 0), t_final, dt_store)
    n1 = np.array([expectation(s, number_operator(s1)) for s in evo1.states])
    peak = n1.max()
    dyn_err = float(np.max(np.abs(n2 - n1) / np.maximum(n1, 0.2 * peak)))

    steady_err = 0.0
    for eta in (10.0, 20.0, 30.0):
        p = tune_to_cp(omega, eta, kappa)
        sa = HilbertSpec(14, has_system_qubit=True)
        sb = HilbertSpec(14, has_system_qubit=True, has_ancilla=True)
        na = expectation(steady_state(rabi_lindblad_model(p, sa)),
                         number_operator(sa))
        nb = expectation(steady_state(two_ion_lindblad_model(p, FIG_S2, sb)),
                         number_operator(sb))
        steady_err = max(steady_err, abs(nb - na) / na)
    ok = dyn_err < 0.05 and steady_err < 0.05
    assert report(4, ok, f"dynamics {dyn_err:.2%}, steady {steady_err:.2%} (<=5%)")


def test_c05_critical_occupation_scaling():
    """Steady ⟨n̂⟩ at g_c over η ∈ {10,20,40,80} fits slope 0.5 ± 0.15."""
    etas = np.array([10.0, 20.0, 40.0, 80.0])
    nbars = []
    for eta in etas:
        params = tune_to_cp(10.0, eta, 1.0)
        space = HilbertSpec(default_fock_dim(eta), has_system_qubit=True)
        rho = steady_state(rabi_lindblad_model(params, space))
        nbars.append(expectation(rho, number_operator(space)))
    slope = float(np.polyfit(np.log(etas), np.log(nbars), 1)[0])
    ok = abs(slope - 0.5) < 0.15
    assert report(5, ok, f"slope = {slope:.3f} (0.5 ± 0.15)")


# --- criterion 6 (and the shared ensembles for criterion 7) ---------------
# The spec's full gate (η ∈ {10,20,40}, 2×10³ trajectories each, budget
# 2-6 h) runs in ~15 minutes on this engine, so it is the default here.
# The spec's 20-minute smoke variant (η ∈ {5,10}, 500 trajectories, ±0.3)
# was measured too and fails both clauses at those sizes (α ≈ 0.8-1.2,
# a ≈ 1.35): see the decisions ledger.

C6_ETAS = (10.0, 20.0, 40.0)
C6_NTRAJ = 2000
C6_ALPHA_TOL = 0.2
C6_AB_TOL = (0.2, 0.3)


@pytest.fixture(scope="module")
def fisher_curves():
    curves = {}
    for eta in C6_ETAS:
        params = tune_to_cp(10.0, eta, 1.0)
        spec = perfect_spec(params, float(eta), 1e-3, default_fock_dim(eta))
        ck = np.geomspace(0.3, float(eta), 29)
        est = estimate_fisher(spec, ck, C6_NTRAJ, None, 6000 + int(eta),
                              richardson=False)
        curves[eta] = est
    return curves


def test_c06a_fisher_transient_exponent(fisher_curves):
    """F ∝ t^α with α = 2 ± tol over κt ∈ [2, η/2].

    Implemented verbatim; expected red for this implementation — the
    measured record information is linear in t beyond the detection onset
    (see the decisions ledger for the full blocking analysis).
    """
    alphas = {}
    for eta, est in fisher_curves.items():
        t, fi = est.t_checkpoints, est.fi_values
        mask = (t >= 2.0) & (t <= eta / 2.0) & (fi > 0)
        alphas[eta] = float(np.polyfit(np.log(t[mask]), np.log(fi[mask]), 1)[0])
    detail = " ".join(f"eta{eta:g}:{a:.2f}" for eta, a in alphas.items())
    ok = all(abs(a - 2.0) < C6_ALPHA_TOL for a in alphas.values())
    assert report("6a", ok, f"alpha {detail} (want 2 ± {C6_ALPHA_TOL})")


def test_c06b_fisher_collapse_exponents(fisher_curves):
    """optimize_collapse on F·t⁻² vs κt/η recovers (2, 1) within tolerance.

    The dataset uses κt ≥ 1.2 checkpoints: the detection onset is an
    η-dependent microscopic transient outside the scaling form."""
    triples = []
    for eta, est in fisher_curves.items():
        for t, fi, se in zip(est.t_checkpoints, est.fi_values, est.std_errors):
            if t >= 1.2 and fi > 0:
                triples.append((eta, t, fi, se))
    data = CollapseDataset.from_points(triples)
    res = optimize_collapse(data, a_range=(1.4, 2.6), b_range=(0.5, 1.5))
    ok = (abs(res.a - 2.0) < C6_AB_TOL[0] and abs(res.b - 1.0) < C6_AB_TOL[1])
    assert report("6b", ok, f"(a,b) = ({res.a:.2f}, {res.b:.2f}), "
                            f"M = {res.measure:.3f}")


def test_c07_beyond_sql(fisher_curves):
    """Long-time F/(κt) grows with system size: the η=40 rate exceeds the
    η=10 rate by more than a factor 2, beyond 2 SE."""
    rates = []
    for est in (fisher_curves[10.0], fisher_curves[40.0]):
        rates.append((est.fi_values[-1] / est.t_checkpoints[-1],
                      est.std_errors[-1] / est.t_checkpoints[-1]))
    (r1, s1), (r2, s2) = rates
    ratio = r2 / r1
    se = ratio * np.sqrt((s1 / r1) ** 2 + (s2 / r2) ** 2)
    ok = ratio - 2.0 > 2.0 * se
    assert report(7, ok, f"F/(kt) ratio = {ratio:.2f} ± {se:.2f} (> 2)")


# --- criterion 8 ------------------------------------------------------------
# density-matrix trajectories: the default run uses η ∈ {5,10} with 300
# records per curve; RABISENSE_FULL=1 adds η=20 and more statistics

C8_ETAS = (5.0, 10.0, 20.0) if FULL else (5.0, 10.0)
C8_NTRAJ = 800 if FULL else 300
C8_FOCK = {5.0: 13, 10.0: 15, 20.0: 18}


def _fi_dataset(gammas_by_label, seed_base=8000):
    """FI curves per η for the given noise strength; returns CollapseDataset."""
    datasets = {}
    for label, gamma in gammas_by_label.items():
        triples = []
        for eta in C8_ETAS:
            params = tune_to_cp(10.0, eta, 1.0)
            t_final = 1.0 * eta
            ck = np.geomspace(1.2, t_final, 11)
            if gamma is None:
                spec = perfect_spec(params, t_final, 2.5e-3,
                                    default_fock_dim(eta))
            else:
                noise = NoiseParams(gamma_dph=1 / 200.0, gamma_m=gamma,
                                    gamma_h=gamma, gamma_c=gamma)
                spec = noisy_spec(params, noise, t_final, 2.5e-3,
                                  C8_FOCK[eta], leak_tol=1e-3)
            est = estimate_fisher(spec, ck, C8_NTRAJ, None,
                                  seed_base + int(eta), richardson=False)
            for t, fi in zip(est.t_checkpoints, est.fi_values):
                if fi > 0:
                    triples.append((eta, t, fi))
        datasets[label] = CollapseDataset.from_points(triples)
    return datasets


def test_c08_noise_robustness():
    """Q ≥ 0.5 at (Γ_dph, Γ) = (κ/200, κ/40); Q = 1 exactly for zero rates;
    Q decreases over a three-point Γ grid."""
    data = _fi_dataset({"ideal": None, "k40": 1 / 40.0, "k10": 1 / 10.0,
                        "k4": 1 / 4.0})
    ideal = data["ideal"]
    q_self = quality_factor(ideal, ideal)
    qs = {label: quality_factor(data[label], ideal)
          for label in ("k40", "k10", "k4")}
    ok = (q_self == 1.0 and qs["k40"] >= 0.5
          and qs["k40"] > qs["k10"] > qs["k4"])
    assert report(8, ok, f"Q(0)={q_self:.1f} Q(k/40)={qs['k40']:.2f} "
                         f"Q(k/10)={qs['k10']:.2f} Q(k/4)={qs['k4']:.2f}")


def test_c09_collapse_metric_unit_suite():
    """M_kn = 0 and M < 1e-3 on exact data; planted (2,1) recovered within
    ±0.05; record probabilities over a 3-step grid sum to 1 ± 1e-8."""
    def master(x):
        return 1.0 + 0.5 * x + 0.1 * x ** 2

    sets = []
    for L in (10.0, 20.0, 40.0):
        x = np.geomspace(0.05, 4.0, 80)
        h = x * L
        sets.append(CollapseSet(L=L, h=h, A=h ** 2 * master(x)))
    data = CollapseDataset(tuple(sets))
    m_kn = collapse_measure_known(data, 2.0, 1.0, master)
    m = collapse_measure(data, 2.0, 1.0).measure
    res = optimize_collapse(data, a_range=(1.4, 2.6), b_range=(0.5, 1.5))
    exact_ok = m_kn < 1e-12 and m < 1e-3
    opt_ok = abs(res.a - 2.0) < 0.05 and abs(res.b - 1.0) < 0.05

    # brute-force likelihood normalization on a 3-step pure-decay grid
    decay = RabiParams(0.0, 0.0, 0.0, kappa=1.0)
    spec = perfect_spec(decay, 3e-3 * 3, 3e-3, 3, initial_fock=1)
    total = 0.0
    for pattern in itertools.product((0, 1), repeat=3):
        events = np.array([k for k, hit in enumerate(pattern) if hit],
                          dtype=np.uint64)
        try:
            blk = run_block(spec, 0, 0, 1, [3], replay_events=[events])
            total += float(np.exp(blk.lnp[0, -1, 0]))
        except FloatingPointError:
            continue  # zero-probability branch (jump without excitation)
    norm_ok = abs(total - 1.0) < 1e-8
    ok = exact_ok and opt_ok and norm_ok
    assert report(9, ok, f"M_kn={m_kn:.1e} M={m:.1e} "
                         f"(a,b)=({res.a:.3f},{res.b:.3f}) sumP={total:.10f}")


def test_c10_reproducibility_across_workers(tmp_path):
    """cmd_fisher with a fixed master seed yields byte-identical CSVs for
    1, 2, and 8 workers."""
    outputs = {}
    for workers in (1, 2, 8):
        out = tmp_path / f"w{workers}"
        cfg = tmp_path / f"w{workers}.toml"
        cfg.write_text(f"""
scheme = "perfect"
[model]
omega = 10.0
eta = 4.0
kappa = 1.0
fock_dim = 18
[run]
n_traj = 96
t_final = 1.5
dt = 2e-3
checkpoints = 6
master_seed = 99
workers = {workers}
block_size = 24
out_dir = "{out}"
""")
        proc = subprocess.run(
            [sys.executable, "-m", "rabisense._entry", "fisher",
             "--config", str(cfg)],
            capture_output=True, text=True, timeout=600)
        assert proc.returncode == 0, proc.stderr
        outputs[workers] = (
            (out / "fisher_eta4.csv").read_bytes(),
            (out / "fisher_eta4_diagnostics.csv").read_bytes(),
        )
    ok = outputs[1] == outputs[2] == outputs[8]
    assert report(10, ok, f"CSV bytes identical across workers: {ok}")
