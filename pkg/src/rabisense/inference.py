"""Likelihood replay of detection records and Monte Carlo Fisher information.

The Fisher information of the counting signal, F(t) = E[(∂_θ ln P[D(t,0)])²],
is estimated by sampling records at the true parameter and re-integrating
each record's conditional evolution at θ ± δ (central differences), never
re-sampling.  Checkpoints are cumulative, so every checkpoint costs one pass.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics.records import TrajectoryRecord, params_hash
from .dynamics.trajectories import TrajectorySpec
from .ensemble import DEFAULT_BLOCK_SIZE, EnsembleResult, replay_ensemble, run_ensemble
from .models import RabiParams, shift_param

SHIFTABLE = ("omega", "Omega_q", "lambda_c", "kappa")


class DeltaTooLargeError(RuntimeError):
    """Finite-difference step fails the half-step consistency check."""


class ReplayMismatchError(ValueError):
    """Replay parameters disagree with the record outside the declared scalars."""


def _spec_from_record(record: TrajectoryRecord) -> TrajectorySpec:
    return TrajectorySpec.from_params_dict(record.params)


def replay_log_likelihood(record: TrajectoryRecord, shifted_params: RabiParams,
                          checkpoint_steps=None):
    """Re-integrate a stored record at the given sensor parameters.

    Returns ln P[D] at t_final, or the cumulative values at checkpoint_steps.
    The record fixes the scheme, grid, detector and noise parameters; only
    the RabiParams may differ from generation.
    """
    base = _spec_from_record(record)
    if base.rabi is None:
        raise ReplayMismatchError("record was generated without sensor parameters")
    spec = replace(base, rabi=shifted_params)
    steps = [record.n_steps] if checkpoint_steps is None else checkpoint_steps
    out = replay_ensemble(spec, [record.events_step], steps)
    lnp = out.lnp[0, :, 0]
    return float(lnp[-1]) if checkpoint_steps is None else lnp


@dataclass
class LikelihoodCurve:
    """ln P[D] of one record over a grid of offsets in one scalar parameter."""

    record: TrajectoryRecord
    parameter: str
    offsets: np.ndarray
    log_likelihoods: np.ndarray

    def __post_init__(self):
        if 0.0 not in np.asarray(self.offsets):
            raise ValueError("offsets must include 0 (replay-fidelity anchor)")


def likelihood_curve(record: TrajectoryRecord, offsets,
                     parameter: str = "omega") -> LikelihoodCurve:
    if parameter not in SHIFTABLE:
        raise ValueError(f"parameter must be one of {SHIFTABLE}")
    base = _spec_from_record(record)
    offsets = np.asarray(offsets, dtype=float)
    lls = np.array([
        replay_log_likelihood(record, shift_param(base.rabi, parameter, d))
        for d in offsets
    ])
    return LikelihoodCurve(record, parameter, offsets, lls)


@dataclass
class FisherEstimate:
    """Monte Carlo estimate of the record Fisher information at checkpoints."""

    t_checkpoints: np.ndarray
    fi_values: np.ndarray
    std_errors: np.ndarray
    n_trajectories: int
    delta_omega: float
    parameter: str = "omega"
    scheme: str = ""
    params_hash: str = ""
    score_mean: np.ndarray | None = None
    score_mean_se: np.ndarray | None = None
    fi_centered: np.ndarray | None = None
    fi_half_delta: np.ndarray | None = None
    n_quarantined: int = 0
    master_seed: int = 0
    ensemble: EnsembleResult | None = field(default=None, repr=False)

    def __post_init__(self):
        neg = self.fi_values < -2.0 * self.std_errors
        if np.any(neg):
            raise ValueError("Fisher estimate significantly negative; estimator broken")

    def to_csv(self) -> str:
        """The exchange table: t, fi, std_err, n_traj, delta, scheme, params-hash."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "fi", "std_err", "n_traj", "delta", "scheme", "params_hash"])
        for t, fi, se in zip(self.t_checkpoints, self.fi_values, self.std_errors):
            writer.writerow([f"{t:.17g}", f"{fi:.17g}", f"{se:.17g}",
                             self.n_trajectories, f"{self.delta_omega:.17g}",
                             self.scheme, self.params_hash])
        return buf.getvalue()

    def diagnostics_to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "fi_centered", "score_mean", "score_mean_se",
                         "fi_half_delta", "n_quarantined"])
        half = self.fi_half_delta if self.fi_half_delta is not None \
            else [float("nan")] * len(self.t_checkpoints)
        for i, t in enumerate(self.t_checkpoints):
            writer.writerow([
                f"{t:.17g}", f"{self.fi_centered[i]:.17g}",
                f"{self.score_mean[i]:.17g}", f"{self.score_mean_se[i]:.17g}",
                f"{half[i]:.17g}", self.n_quarantined,
            ])
        return buf.getvalue()


def _fisher_from_lnp(lnp, delta, valid, times, n_total, parameter, scheme,
                     phash, master_seed, richardson, delta_check_tol,
                     ensemble=None) -> FisherEstimate:
    """Scores and FI from stacked per-trajectory log-likelihoods.

    lnp has variants [base, +δ, −δ(, +δ/2, −δ/2)] on axis 0.
    """
    use = lnp[:, :, valid]
    n = use.shape[2]
    if n < 2:
        raise ValueError("need at least two valid trajectories")
    scores = (use[1] - use[2]) / (2.0 * delta)  # (C, n)
    fi = (scores ** 2).mean(axis=1)
    fi_se = (scores ** 2).std(axis=1, ddof=1) / np.sqrt(n)
    smean = scores.mean(axis=1)
    smean_se = scores.std(axis=1, ddof=1) / np.sqrt(n)
    centered = ((scores - smean[:, None]) ** 2).mean(axis=1)

    fi_half = None
    if richardson:
        scores_half = (use[3] - use[4]) / delta  # step δ/2: spacing 2·(δ/2)
        fi_half = (scores_half ** 2).mean(axis=1)
        gap = np.abs(fi - fi_half)
        # halving δ must move F̂ by less than its Monte Carlo error
        bad = gap > np.maximum(delta_check_tol * np.maximum(fi_se, 1e-300),
                               1e-12 * np.maximum(fi, 1.0))
        if np.any(bad):
            worst = int(np.argmax(gap / np.maximum(fi_se, 1e-300)))
            raise DeltaTooLargeError(
                f"δ={delta:g} fails the half-step check at t={times[worst]:.4g}: "
                f"|ΔF| = {gap[worst]:.3e} vs MC error {fi_se[worst]:.3e}; reduce delta")

    return FisherEstimate(
        t_checkpoints=times, fi_values=fi, std_errors=fi_se,
        n_trajectories=n, delta_omega=delta, parameter=parameter, scheme=scheme,
        params_hash=phash, score_mean=smean, score_mean_se=smean_se,
        fi_centered=centered, fi_half_delta=fi_half,
        n_quarantined=int(n_total - n), master_seed=master_seed,
        ensemble=ensemble,
    )


def estimate_fisher(spec: TrajectorySpec, t_checkpoints, n_traj: int,
                    delta: float | None, master_seed: int,
                    parameter: str = "omega", richardson: bool = True,
                    delta_check_tol: float = 1.0,
                    block_size: int = DEFAULT_BLOCK_SIZE, workers: int = 0,
                    cache_dir: str | None = None) -> FisherEstimate:
    """Sample n_traj records at the true parameters and estimate F(t).

    Records and their ±δ (and ±δ/2 when richardson) replays are evolved in
    one fused pass: the unshifted variant decides the jumps, every variant
    accumulates its own ln P.  delta defaults to 1e-3·(parameter value).
    """
    if parameter not in SHIFTABLE:
        raise ValueError(f"parameter must be one of {SHIFTABLE}")
    if spec.rabi is None:
        raise ValueError("Fisher estimation needs sensor parameters in the spec")
    if delta is None:
        delta = 1e-3 * abs(getattr(spec.rabi, parameter))
    if delta <= 0:
        raise ValueError("delta must be positive")
    steps = np.unique(np.round(np.asarray(t_checkpoints, float) / spec.dt).astype(np.int64))
    if steps[0] < 0 or steps[-1] > spec.n_steps:
        raise ValueError("checkpoints outside the trajectory window")
    variants = [(parameter, 0.0), (parameter, +delta), (parameter, -delta)]
    if richardson:
        variants += [(parameter, +delta / 2.0), (parameter, -delta / 2.0)]
    ens = run_ensemble(spec, n_traj, steps, master_seed, variants=variants,
                       block_size=block_size, workers=workers, cache_dir=cache_dir)
    return _fisher_from_lnp(
        ens.lnp, delta, ens.valid_mask, ens.times, n_traj, parameter,
        spec.scheme, params_hash(spec.params_dict()), master_seed, richardson,
        delta_check_tol, ensemble=ens,
    )


def fisher_from_records(records, delta: float, t_checkpoints=None,
                        parameter: str = "omega", richardson: bool = True,
                        delta_check_tol: float = 1.0,
                        block_size: int = DEFAULT_BLOCK_SIZE) -> FisherEstimate:
    """Re-derive F(t) from stored records at a new finite-difference step."""
    if not records:
        raise ValueError("no records given")
    phash = records[0].params_hash()
    if any(r.params_hash() != phash for r in records):
        raise ReplayMismatchError("records were generated with differing parameters")
    spec = _spec_from_record(records[0])
    if t_checkpoints is None:
        steps = np.unique(np.linspace(0, spec.n_steps, 41).astype(np.int64))
    else:
        steps = np.unique(np.round(np.asarray(t_checkpoints, float) / spec.dt).astype(np.int64))
    variants = [(parameter, 0.0), (parameter, +delta), (parameter, -delta)]
    if richardson:
        variants += [(parameter, +delta / 2.0), (parameter, -delta / 2.0)]
    ens = replay_ensemble(spec, [r.events_step for r in records], steps,
                          variants=variants, block_size=block_size)
    valid = np.ones(len(records), dtype=bool)
    return _fisher_from_lnp(ens.lnp, delta, valid, ens.times, len(records),
                            parameter, spec.scheme, phash, records[0].master_seed,
                            richardson, delta_check_tol, ensemble=ens)


@dataclass
class ScoreDiagnostics:
    biased_checkpoints: list
    undersampled_checkpoints: list

    @property
    def ok(self) -> bool:
        return not self.biased_checkpoints and not self.undersampled_checkpoints


def score_mean_diagnostic(estimate: FisherEstimate) -> ScoreDiagnostics:
    """Estimator health check: score-mean bias and error-bar undersampling.

    Flags checkpoints where |mean score| > 3 standard errors (the score
    identity E[∂ ln P] = 0 fails) or where the FI error bar exceeds half the
    estimate.
    """
    biased, under = [], []
    for i, t in enumerate(estimate.t_checkpoints):
        se = estimate.score_mean_se[i]
        if abs(estimate.score_mean[i]) > 3.0 * max(se, 1e-300):
            biased.append(float(t))
        if estimate.n_trajectories < 2 or (
                estimate.fi_values[i] > 0
                and estimate.std_errors[i] > 0.5 * estimate.fi_values[i]):
            under.append(float(t))
    return ScoreDiagnostics(biased, under)
