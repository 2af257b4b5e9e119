"""Experiment configuration: TOML schema, validation, unit conversion, hashing.

Schema (all rates in reference units unless unit = "2pi_hz"):

    scheme = "perfect"              # perfect | ancilla | noisy
    unit = "dimensionless"          # or "2pi_hz" (+ reference_rate_hz)
    reference_rate_hz = 200.0       # only with unit = "2pi_hz"

    [model]
    omega = 10.0                    # mode frequency
    eta = 50.0                      # effective system size Ω/ω (scalar or list)
    kappa = 1.0                     # phonon dissipation rate
    g_over_gc = 1.0                 # coupling in units of the critical coupling
    fock_dim = 0                    # 0 = ceil(4√η)+10
    initial_fock = 0

    [ancilla]                       # ancilla scheme, detector-demo, kappa-fit
    Omega_s, Omega_w, Gamma_s, Gamma_w, eta_ld2, epsilon

    [noise]                         # noisy scheme
    gamma_dph, gamma_m, gamma_h, gamma_c

    [run]
    n_traj, t_final, dt, checkpoints (count or list of times), master_seed,
    delta_omega (0 = 1e-3·omega), workers (0 = all cores), block_size,
    out_dir, save_records, richardson

    [scan]                          # steady-scan
    eta_list = [10, 20, 40, 80]
    two_ion = false

    [kappa_fit]
    initial_n, sweep_points, sweep_factor

    [collapse]
    a_range, b_range, fixed_exponents

With unit = "2pi_hz", rate-valued keys are plain frequencies in Hz and are
divided by reference_rate_hz; time-valued keys (t_final, dt) are seconds and
are multiplied by 2π·reference_rate_hz.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..models import AncillaParams, NoiseParams


class ConfigError(ValueError):
    """Configuration fails schema validation (CLI exit code 2)."""


_SECTIONS = {"model", "ancilla", "noise", "run", "scan", "kappa_fit", "collapse"}
_TOP_KEYS = {"scheme", "unit", "reference_rate_hz"}

_MODEL_KEYS = {"omega", "eta", "kappa", "g_over_gc", "fock_dim", "initial_fock"}
_ANCILLA_KEYS = {"Omega_s", "Omega_w", "Gamma_s", "Gamma_w", "eta_ld2", "epsilon"}
_NOISE_KEYS = {"gamma_dph", "gamma_m", "gamma_h", "gamma_c"}
_RUN_KEYS = {"n_traj", "t_final", "dt", "checkpoints", "master_seed",
             "delta_omega", "workers", "block_size", "out_dir", "save_records",
             "richardson"}
_SCAN_KEYS = {"eta_list", "two_ion"}
_KFIT_KEYS = {"initial_n", "sweep_points", "sweep_factor"}
_COLLAPSE_KEYS = {"a_range", "b_range", "fixed_exponents"}

_RATE_KEYS_MODEL = {"omega", "kappa"}
_TIME_KEYS_RUN = {"t_final", "dt"}


@dataclass
class ExperimentConfig:
    scheme: str = "perfect"
    model: dict = field(default_factory=dict)
    ancilla: AncillaParams | None = None
    noise: NoiseParams | None = None
    run: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    kappa_fit: dict = field(default_factory=dict)
    collapse: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, separators=(",", ":"),
                       default=str).encode()).hexdigest()[:16]

    @property
    def eta_values(self) -> list[float]:
        eta = self.model.get("eta", 1.0)
        return [float(e) for e in (eta if isinstance(eta, (list, tuple)) else [eta])]


def _check_keys(section: str, table: dict, allowed: set) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def _positive(section, table, key, allow_zero=False) -> None:
    if key in table:
        val = table[key]
        vals = val if isinstance(val, (list, tuple)) else [val]
        for v in vals:
            if not isinstance(v, (int, float)) or (v < 0 or (v == 0 and not allow_zero)):
                raise ConfigError(f"[{section}] {key} must be positive, got {val!r}")


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from exc

    unknown = set(data) - _SECTIONS - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")

    scheme = data.get("scheme", "perfect")
    if scheme not in ("perfect", "ancilla", "noisy"):
        raise ConfigError(f"scheme must be perfect|ancilla|noisy, got {scheme!r}")
    unit = data.get("unit", "dimensionless")
    if unit not in ("dimensionless", "2pi_hz"):
        raise ConfigError(f"unit must be dimensionless|2pi_hz, got {unit!r}")
    ref_hz = data.get("reference_rate_hz")
    if unit == "2pi_hz":
        if not isinstance(ref_hz, (int, float)) or ref_hz <= 0:
            raise ConfigError("unit = '2pi_hz' needs a positive reference_rate_hz")
    elif ref_hz is not None:
        raise ConfigError("reference_rate_hz only applies with unit = '2pi_hz'")

    model = dict(data.get("model", {}))
    _check_keys("model", model, _MODEL_KEYS)
    for key in ("omega", "eta"):
        _positive("model", model, key)
    _positive("model", model, "kappa", allow_zero=True)
    _positive("model", model, "g_over_gc", allow_zero=True)
    if "fock_dim" in model and (not isinstance(model["fock_dim"], int)
                                or model["fock_dim"] < 0):
        raise ConfigError("[model] fock_dim must be a non-negative integer")

    run = dict(data.get("run", {}))
    _check_keys("run", run, _RUN_KEYS)
    for key in ("t_final", "dt"):
        _positive("run", run, key)
    if "n_traj" in run and (not isinstance(run["n_traj"], int) or run["n_traj"] < 1):
        raise ConfigError("[run] n_traj must be a positive integer")
    for key in ("workers", "block_size", "master_seed"):
        if key in run and (not isinstance(run[key], int) or run[key] < 0):
            raise ConfigError(f"[run] {key} must be a non-negative integer")

    scan = dict(data.get("scan", {}))
    _check_keys("scan", scan, _SCAN_KEYS)
    kfit = dict(data.get("kappa_fit", {}))
    _check_keys("kappa_fit", kfit, _KFIT_KEYS)
    coll = dict(data.get("collapse", {}))
    _check_keys("collapse", coll, _COLLAPSE_KEYS)

    # unit conversion to reference-rate units
    if unit == "2pi_hz":
        scale = 1.0 / float(ref_hz)
        tscale = 2.0 * np.pi * float(ref_hz)
        for key in _RATE_KEYS_MODEL & set(model):
            model[key] = model[key] * scale
        if "delta_omega" in run:
            run["delta_omega"] = run["delta_omega"] * scale
        for key in _TIME_KEYS_RUN & set(run):
            run[key] = run[key] * tscale

    ancilla = None
    if "ancilla" in data:
        table = dict(data["ancilla"])
        _check_keys("ancilla", table, _ANCILLA_KEYS)
        if unit == "2pi_hz":
            for key in ("Omega_s", "Omega_w", "Gamma_s", "Gamma_w"):
                if key in table:
                    table[key] = table[key] / float(ref_hz)
        try:
            ancilla = AncillaParams(**table)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[ancilla]: {exc}") from exc

    noise = None
    if "noise" in data:
        table = dict(data["noise"])
        _check_keys("noise", table, _NOISE_KEYS)
        if unit == "2pi_hz":
            table = {k: v / float(ref_hz) for k, v in table.items()}
        try:
            noise = NoiseParams(**table)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[noise]: {exc}") from exc

    if scheme == "ancilla" and ancilla is None:
        raise ConfigError("scheme = 'ancilla' needs an [ancilla] section")
    if scheme == "noisy" and noise is None:
        raise ConfigError("scheme = 'noisy' needs a [noise] section")

    return ExperimentConfig(scheme=scheme, model=model, ancilla=ancilla,
                            noise=noise, run=run, scan=scan, kappa_fit=kfit,
                            collapse=coll, raw=data)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
