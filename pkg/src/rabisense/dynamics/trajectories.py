"""Stochastic photon-counting trajectories for the three measurement schemes.

All schemes share one fixed-grid driver.  Per step, a single Bernoulli draw
per monitored channel decides a jump with the physical first-order
probability p = (monitored flux)·dt evaluated on the current normalized
conditional state (2κ⟨c†c⟩dt for direct counting, εΓ_s⟨d|ρ|d⟩dt for the
ancilla detector).  The no-jump evolution is applied with an exact one-step
propagator (dense expm of the no-jump generator; density schemes add the
unmonitored recycle terms by symmetric splitting) and renormalized; a jump
replaces the step by the normalized jump map.  ln P[D] accumulates the log
of the realized step probabilities, so the weights of all possible records
sum to one exactly at any dt and the continuum record statistics are
recovered as dt → 0.

A trajectory is a pure function of (scheme parameters, dt, master seed,
trajectory index): randomness comes from a counter-based Philox stream at
counter offset index·2¹²⁸, so ensembles are reproducible for any batching or
worker layout.  Replays re-integrate a stored record without touching RNG.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from ..hilbert import (
    ANCILLA_D,
    ANCILLA_E,
    ANCILLA_G,
    QUBIT_DOWN,
    HilbertSpec,
    build_ladder,
    build_pauli,
    number_operator,
)
from ..models import (
    AncillaParams,
    NoiseParams,
    RabiParams,
    build_ancilla_hamiltonian,
    build_rabi_hamiltonian,
    shift_param,
)
from .lindblad import (
    LEAK_TOL,
    LeakageError,
    LindbladModel,
    ancilla_lindblad_model,
    noisy_rabi_lindblad_model,
    rabi_lindblad_model,
    two_ion_lindblad_model,
)
from .records import TrajectoryRecord

RNG_CHUNK = 1024
SPLIT_GUARD = 0.15  # max dt · (largest unmonitored rate) for the recycle split


# ---------------------------------------------------------------------------
# scheme specification


@dataclass(frozen=True)
class TrajectorySpec:
    """Everything that pins a trajectory ensemble except the seed."""

    scheme: str  # perfect | ancilla | noisy
    space: HilbertSpec
    t_final: float
    dt: float
    rabi: RabiParams | None = None
    ancilla: AncillaParams | None = None
    noise: NoiseParams | None = None
    initial_fock: int = 0
    initial_qubit: int = QUBIT_DOWN
    leak_tol: float = LEAK_TOL

    def __post_init__(self):
        if self.scheme not in ("perfect", "ancilla", "noisy"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("t_final and dt must be positive")
        if self.scheme in ("perfect", "noisy") and self.rabi is None:
            raise ValueError(f"{self.scheme} scheme needs RabiParams")
        if self.scheme == "noisy" and self.noise is None:
            raise ValueError("noisy scheme needs NoiseParams")
        if self.scheme == "ancilla" and self.ancilla is None:
            raise ValueError("ancilla scheme needs AncillaParams")
        if self.scheme in ("perfect", "noisy") and not self.space.has_system_qubit:
            raise ValueError(f"{self.scheme} scheme runs on a qubit-bearing space")
        if self.scheme == "ancilla" and not self.space.has_ancilla:
            raise ValueError("ancilla scheme runs on an ancilla-bearing space")
        if self.scheme == "ancilla" and self.space.has_system_qubit and self.rabi is None:
            raise ValueError("ancilla scheme with a system qubit needs RabiParams")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def pure(self) -> bool:
        return self.scheme == "perfect"

    def initial_index(self) -> int:
        q = self.initial_qubit if self.space.has_system_qubit else 0
        return self.space.index(self.initial_fock, q, 0)

    def lindblad_model(self) -> LindbladModel:
        """The unconditional model whose solution the seed-ensemble must average to."""
        if self.scheme == "perfect":
            return rabi_lindblad_model(self.rabi, self.space, monitored=True)
        if self.scheme == "noisy":
            return noisy_rabi_lindblad_model(self.rabi, self.noise, self.space)
        if self.space.has_system_qubit:
            return two_ion_lindblad_model(self.rabi, self.ancilla, self.space)
        return ancilla_lindblad_model(self.ancilla, self.space)

    def params_dict(self) -> dict:
        def _d(obj):
            return None if obj is None else {k: float(v) for k, v in vars(obj).items()}

        return {
            "scheme": self.scheme,
            "fock_dim": self.space.fock_dim,
            "has_system_qubit": self.space.has_system_qubit,
            "has_ancilla": self.space.has_ancilla,
            "t_final": float(self.n_steps * self.dt),
            "dt": float(self.dt),
            "initial_fock": self.initial_fock,
            "initial_qubit": self.initial_qubit,
            "rabi": _d(self.rabi),
            "ancilla": _d(self.ancilla),
            "noise": _d(self.noise),
        }

    @classmethod
    def from_params_dict(cls, params: dict) -> "TrajectorySpec":
        space = HilbertSpec(params["fock_dim"], params["has_system_qubit"],
                            params["has_ancilla"])
        return cls(
            scheme=params["scheme"], space=space, t_final=params["t_final"],
            dt=params["dt"],
            rabi=None if params["rabi"] is None else RabiParams(**params["rabi"]),
            ancilla=None if params["ancilla"] is None else AncillaParams(**params["ancilla"]),
            noise=None if params["noise"] is None else NoiseParams(**params["noise"]),
            initial_fock=params["initial_fock"], initial_qubit=params["initial_qubit"],
        )

    def shifted(self, name: str, delta: float) -> "TrajectorySpec":
        if delta == 0.0:
            return self
        return replace(self, rabi=shift_param(self.rabi, name, delta))


def perfect_spec(params: RabiParams, t_final: float, dt: float,
                 fock_dim: int, initial_fock: int = 0,
                 include_qubit: bool = True, **kw) -> TrajectorySpec:
    space = HilbertSpec(fock_dim, has_system_qubit=include_qubit)
    return TrajectorySpec("perfect", space, t_final, dt, rabi=params,
                          initial_fock=initial_fock, **kw)


def noisy_spec(params: RabiParams, noise: NoiseParams, t_final: float, dt: float,
               fock_dim: int, initial_fock: int = 0, **kw) -> TrajectorySpec:
    space = HilbertSpec(fock_dim, has_system_qubit=True)
    return TrajectorySpec("noisy", space, t_final, dt, rabi=params, noise=noise,
                          initial_fock=initial_fock, **kw)


def ancilla_spec(params: RabiParams | None, anc: AncillaParams, t_final: float,
                 dt: float, fock_dim: int, initial_fock: int = 0,
                 include_system: bool = True, **kw) -> TrajectorySpec:
    space = HilbertSpec(fock_dim, has_system_qubit=include_system, has_ancilla=True)
    return TrajectorySpec("ancilla", space, t_final, dt, rabi=params, ancilla=anc,
                          initial_fock=initial_fock, **kw)


def default_dt(spec_or_model) -> float:
    """Conservative step: 1e-2 over the fastest rate in the model."""
    model = spec_or_model.lindblad_model() if isinstance(spec_or_model, TrajectorySpec) \
        else spec_or_model
    return 1e-2 / max(model.max_rate(), 1e-12)


# ---------------------------------------------------------------------------
# engines


class _PureEngine:
    """Pure-state scheme: states are columns of a (dim, B) array."""

    def __init__(self, spec: TrajectorySpec):
        rabi = spec.rabi
        space = spec.space
        h = build_rabi_hamiltonian(rabi, space).matrix
        n = number_operator(space).matrix
        h_eff = h.toarray().astype(np.complex128) - 1j * rabi.kappa * n.toarray()
        self.step_map = sla.expm(-1j * spec.dt * h_eff)
        self.jump_op = build_ladder(space)[0].matrix  # sparse c
        self.space = space
        # monitored flux weights: 2κ·n on the diagonal populations
        self.flux_diag = 2.0 * rabi.kappa * np.repeat(
            np.arange(space.fock_dim, dtype=np.float64), space.sub_dim)
        self._spare = None

    def alloc(self, B: int, initial_index: int):
        psi = np.zeros((self.space.dim, B), dtype=np.complex128)
        psi[initial_index, :] = 1.0
        self._spare = np.empty_like(psi)
        return psi

    def jump_flux(self, psi):
        return self.observe(psi, self.flux_diag)

    def step(self, psi):
        """No-jump step: returns (engine-owned next buffer, squared norms)."""
        nxt = self._spare
        np.matmul(self.step_map, psi, out=nxt)
        # .real/.imag are views: column norms without a temporary copy
        s = (np.einsum("ib,ib->b", nxt.real, nxt.real)
             + np.einsum("ib,ib->b", nxt.imag, nxt.imag))
        self._spare = psi
        return nxt, s

    def normalize(self, psi, s):
        psi *= 1.0 / np.sqrt(s)

    def set_column(self, batch, j, state):
        batch[:, j] = state

    def jump(self, pre, j):
        col = self.jump_op @ pre[:, j]
        w = np.linalg.norm(col)
        if w == 0.0:
            raise FloatingPointError("jump fired on a state with no phonons")
        return col / w

    def observe(self, psi, weights):
        return np.einsum("ib,i->b", np.abs(psi) ** 2, weights)

    def leak(self, psi):
        top = (self.space.fock_dim - 1) * self.space.sub_dim
        return np.sum(np.abs(psi[top:, :]) ** 2, axis=0)

    def min_eigs(self, psi, sample):  # pure states are positive by construction
        return None


class _DensityEngine:
    """Density-matrix schemes: states are slabs of a (B, dim, dim) array.

    One step is ρ += dt/2·J[ρ];  ρ ← ŨρŨ†;  ρ += dt/2·J[ρ], with J the
    unmonitored recycle terms applied in place (write/read regions disjoint
    or applied in an order that never reads an already-written row) and
    Ũ = expm(−i dt H̃) the exact propagator of the remaining drift.
    """

    def __init__(self, spec: TrajectorySpec):
        space = spec.space
        F, sub = space.fock_dim, space.sub_dim
        nvals = np.repeat(np.arange(F, dtype=np.float64), sub)
        imag_diag = np.zeros(space.dim)
        self.slice_feeds = []
        self.half_multiplier = None
        half = 0.5 * spec.dt

        if spec.scheme == "ancilla":
            anc = spec.ancilla
            h = build_ancilla_hamiltonian(anc, space).matrix
            if space.has_system_qubit:
                h = h + build_rabi_hamiltonian(spec.rabi, space).matrix
            imag_diag[ANCILLA_E::3] += 0.5 * anc.Gamma_w
            imag_diag[ANCILLA_D::3] += 0.5 * anc.Gamma_s
            self.flux_diag = np.zeros(space.dim)
            self.flux_diag[ANCILLA_D::3] = anc.epsilon * anc.Gamma_s  # εΓ_s⟨d|ρ|d⟩
            rest = space.dim // 3
            max_unmonitored = max(anc.Gamma_s, anc.Gamma_w)

            # order matters for exact linearity: e→g before d→e, so each
            # feed reads source blocks no earlier feed has written
            def feed_weak(A, c=half * anc.Gamma_w, rest=rest):
                A5 = A.reshape(-1, rest, 3, rest, 3)
                A5[:, :, ANCILLA_G, :, ANCILLA_G] += c * A5[:, :, ANCILLA_E, :, ANCILLA_E]

            self.slice_feeds.append(feed_weak)
            undetected = (1.0 - anc.epsilon) * anc.Gamma_s
            if undetected > 0:

                def feed_strong(A, c=half * undetected, rest=rest):
                    A5 = A.reshape(-1, rest, 3, rest, 3)
                    A5[:, :, ANCILLA_E, :, ANCILLA_E] += c * A5[:, :, ANCILLA_D, :, ANCILLA_D]

                self.slice_feeds.append(feed_strong)

            def jump_map(rho, rest=rest):
                out = np.zeros_like(rho)
                o5 = out.reshape(rest, 3, rest, 3)
                o5[:, ANCILLA_E, :, ANCILLA_E] = \
                    rho.reshape(rest, 3, rest, 3)[:, ANCILLA_D, :, ANCILLA_D]
                return out

            self.jump_map = jump_map

        else:  # noisy
            noise = spec.noise
            h = build_rabi_hamiltonian(spec.rabi, space).matrix
            kappa = spec.rabi.kappa
            imag_diag += kappa * nvals  # monitored (c, 2κ): γ/2·c†c = κ n̂
            self.flux_diag = 2.0 * kappa * nvals  # 2κ tr(cρc†) = 2κ Σ n ρ_nn
            max_unmonitored = max(noise.gamma_dph, noise.gamma_m,
                                  noise.gamma_h, noise.gamma_c)

            mult = np.zeros((space.dim, space.dim))
            if noise.gamma_dph > 0:
                zdiag = build_pauli(space, "z").matrix.diagonal().real
                mult += noise.gamma_dph * np.outer(zdiag, zdiag)
                imag_diag += 0.5 * noise.gamma_dph  # σ_z†σ_z = 1
            if noise.gamma_m > 0:
                mult += noise.gamma_m * np.outer(nvals, nvals)
                imag_diag += 0.5 * noise.gamma_m * nvals ** 2
            if noise.gamma_dph > 0 or noise.gamma_m > 0:
                self.half_multiplier = 1.0 + half * mult

            w = np.sqrt(np.arange(1, F, dtype=np.float64))  # √(n+1), n = 0..F-2
            if noise.gamma_h > 0:
                imag_diag += 0.5 * noise.gamma_h * (nvals + 1.0)  # cc† = n̂+1
                c_h = half * noise.gamma_h

                # c†ρc: writes row n+1 from row n; descending n never reads
                # a row written earlier in the same pass
                def feed_heat(A, c=c_h, w=w, F=F, sub=sub):
                    A6 = A.reshape(-1, F, sub, F, sub)
                    for n in range(F - 2, -1, -1):
                        A6[:, n + 1, :, 1:, :] += (c * w[n]) * (
                            A6[:, n, :, :-1, :] * w[None, None, :, None])

                self.slice_feeds.append(feed_heat)
            if noise.gamma_c > 0:
                imag_diag += 0.5 * noise.gamma_c * nvals
                c_c = half * noise.gamma_c

                # cρc†: writes row n from row n+1; ascending n is safe
                def feed_cool(A, c=c_c, w=w, F=F, sub=sub):
                    A6 = A.reshape(-1, F, sub, F, sub)
                    for n in range(F - 1):
                        A6[:, n, :, :-1, :] += (c * w[n]) * (
                            A6[:, n + 1, :, 1:, :] * w[None, None, :, None])

                self.slice_feeds.append(feed_cool)

            w_outer = np.outer(w, w)

            def jump_map(rho, w=w_outer, F=F, sub=sub):
                out = np.zeros_like(rho)
                o6 = out.reshape(F, sub, F, sub)
                o6[:-1, :, :-1, :] = rho.reshape(F, sub, F, sub)[1:, :, 1:, :] \
                    * w[:, None, :, None]
                return out

            self.jump_map = jump_map

        if spec.dt * max_unmonitored > SPLIT_GUARD:
            raise ValueError(
                f"dt={spec.dt:g} too coarse for the recycle split "
                f"(dt·rate = {spec.dt * max_unmonitored:.2f} > {SPLIT_GUARD})")

        h_eff = h.toarray().astype(np.complex128) - 1j * np.diag(imag_diag)
        self.step_map = sla.expm(-1j * spec.dt * h_eff)
        self.step_map_dag = np.ascontiguousarray(self.step_map.conj().T)
        self.space = space
        self._A = self._Y = self._spare = None

    def alloc(self, B: int, initial_index: int):
        d = self.space.dim
        R = np.zeros((B, d, d), dtype=np.complex128)
        R[:, initial_index, initial_index] = 1.0
        self._A = np.empty_like(R)
        self._Y = np.empty_like(R)
        self._spare = np.empty_like(R)
        return R

    def _half_feed(self, A):
        for feed in self.slice_feeds:
            feed(A)
        if self.half_multiplier is not None:
            A *= self.half_multiplier

    def jump_flux(self, R):
        return self.observe(R, self.flux_diag)

    def step(self, R):
        A = self._A
        np.copyto(A, R)
        self._half_feed(A)
        np.matmul(self.step_map, A, out=self._Y)
        Z = self._spare
        np.matmul(self._Y, self.step_map_dag, out=Z)
        self._half_feed(Z)
        s = np.einsum("bii->b", Z).real
        self._spare = R
        return Z, s

    def normalize(self, R, s):
        R *= (1.0 / s)[:, None, None]

    def set_column(self, batch, j, state):
        batch[j] = state

    def jump(self, pre, j):
        out = self.jump_map(pre[j])
        tr = np.trace(out).real
        if tr <= 0.0:
            raise FloatingPointError("jump fired on a state with no source population")
        return out / tr

    def observe(self, R, weights):
        return np.einsum("bii,i->b", R, weights).real

    def leak(self, R):
        top = (self.space.fock_dim - 1) * self.space.sub_dim
        return np.einsum("bii->b", R[:, top:, top:]).real

    def min_eigs(self, R, sample):
        if sample <= 0:
            return None
        take = min(sample, R.shape[0])
        return float(min(np.linalg.eigvalsh(R[b]).min() for b in range(take)))


def _build_engine(spec: TrajectorySpec):
    return _PureEngine(spec) if spec.pure else _DensityEngine(spec)


# ---------------------------------------------------------------------------
# the fixed-grid driver


def _philox_generators(master_seed: int, start_index: int, count: int):
    return [
        np.random.Generator(np.random.Philox(key=master_seed,
                                             counter=[0, 0, start_index + j, 0]))
        for j in range(count)
    ]


@dataclass
class BlockResult:
    """Raw per-trajectory output of one batched run (or replay)."""

    start_index: int
    checkpoint_steps: np.ndarray
    times: np.ndarray
    lnp: np.ndarray              # (n_variants, n_checkpoints, B)
    nbar: np.ndarray             # (n_checkpoints, B)
    sz: np.ndarray | None
    leak_max: np.ndarray         # (B,)
    n_jumps: np.ndarray          # (B,)
    events: list                 # per trajectory: uint64 step indices
    min_eig: float | None = None


def run_block(spec: TrajectorySpec, master_seed: int, start_index: int, n_traj: int,
              checkpoint_steps, variants=(("omega", 0.0),),
              replay_events=None, positivity_sample: int = 0) -> BlockResult:
    """Run (or replay) a batch of trajectories on the shared step grid.

    variants is a sequence of (parameter name, offset); variant 0 must be the
    unshifted generator and is the one whose jump flux decides the jumps when
    sampling.  With replay_events (list of step-index arrays, one per
    trajectory), no RNG is consumed and the recorded jumps are imposed on
    every variant.
    """
    name0, delta0 = variants[0]
    if delta0 != 0.0:
        raise ValueError("variant 0 must be the unshifted parameter set")
    n_steps = spec.n_steps
    ckpt = np.unique(np.asarray(checkpoint_steps, dtype=np.int64))
    if ckpt.size == 0 or ckpt[0] < 0 or ckpt[-1] > n_steps:
        raise ValueError("checkpoint steps must lie within the grid")

    engines = [_build_engine(spec.shifted(name, delta)) for name, delta in variants]
    states = [eng.alloc(n_traj, spec.initial_index()) for eng in engines]
    V = len(engines)

    sampling = replay_events is None
    if sampling:
        gens = _philox_generators(master_seed, start_index, n_traj)
        u_chunk = np.empty((RNG_CHUNK, n_traj))
    else:
        if len(replay_events) != n_traj:
            raise ValueError("need one event array per replayed trajectory")
        events_by_step: dict[int, list[int]] = {}
        for j, ev in enumerate(replay_events):
            for s in np.asarray(ev, dtype=np.int64):
                events_by_step.setdefault(int(s), []).append(j)

    nvals = np.repeat(np.arange(spec.space.fock_dim, dtype=np.float64),
                      spec.space.sub_dim)
    zvals = None
    if spec.space.has_system_qubit:
        zvals = build_pauli(spec.space, "z").matrix.diagonal().real

    C = ckpt.size
    lnp = np.zeros((V, C, n_traj))
    nbar = np.zeros((C, n_traj))
    sz = np.zeros((C, n_traj)) if zvals is not None else None
    leak_max = np.zeros(n_traj)
    n_jumps = np.zeros(n_traj, dtype=np.int64)
    ll_run = np.zeros((V, n_traj))
    events: list[list[int]] = [[] for _ in range(n_traj)]
    min_eig = None

    ckpt_pos = 0

    def _snapshot(step):
        nonlocal ckpt_pos, min_eig
        while ckpt_pos < C and ckpt[ckpt_pos] == step:
            lnp[:, ckpt_pos, :] = ll_run
            nbar[ckpt_pos] = engines[0].observe(states[0], nvals)
            if sz is not None:
                sz[ckpt_pos] = engines[0].observe(states[0], zvals)
            me = engines[0].min_eigs(states[0], positivity_sample)
            if me is not None:
                min_eig = me if min_eig is None else min(min_eig, me)
            ckpt_pos += 1

    _snapshot(0)
    np.maximum(leak_max, engines[0].leak(states[0]), out=leak_max)
    dt = spec.dt
    with np.errstate(divide="ignore"):
        for step in range(n_steps):
            if sampling and step % RNG_CHUNK == 0:
                take = min(RNG_CHUNK, n_steps - step)
                for j, g in enumerate(gens):
                    u_chunk[:take, j] = g.random(take)

            # physical per-step jump probabilities, one per variant
            probs = [dt * eng.jump_flux(st) for eng, st in zip(engines, states)]
            p0 = probs[0]
            if p0.max() > 0.5:
                raise ValueError(
                    f"per-step jump probability reached {p0.max():.2f}; reduce dt")
            if sampling:
                jump_cols = np.nonzero(u_chunk[step % RNG_CHUNK] < p0)[0]
            else:
                jump_cols = np.asarray(events_by_step.get(step, []), dtype=np.int64)

            for v, eng in enumerate(engines):
                p = probs[v]
                prev = states[v]
                nxt, s = eng.step(prev)  # prev becomes the engine spare, intact
                eng.normalize(nxt, s)
                ll_run[v] += np.log1p(-p)
                for j in jump_cols:
                    eng.set_column(nxt, j, eng.jump(prev, j))
                    ll_run[v, j] += np.log(max(p[j], 1e-300)) - np.log1p(-p[j])
                states[v] = nxt

            if jump_cols.size:
                for j in jump_cols:
                    events[j].append(step)
                n_jumps[jump_cols] += 1

            np.maximum(leak_max, engines[0].leak(states[0]), out=leak_max)
            _snapshot(step + 1)

    return BlockResult(
        start_index=start_index, checkpoint_steps=ckpt, times=ckpt * spec.dt,
        lnp=lnp, nbar=nbar, sz=sz, leak_max=leak_max, n_jumps=n_jumps,
        events=[np.array(ev, dtype=np.uint64) for ev in events], min_eig=min_eig,
    )


# ---------------------------------------------------------------------------
# single-trajectory API


@dataclass
class TrajectoryOutput:
    record: TrajectoryRecord
    log_likelihood: float
    times: np.ndarray
    nbar: np.ndarray
    sz: np.ndarray | None
    leak_max: float
    valid: bool

    @property
    def n_jumps(self) -> int:
        return int(self.record.events_step.size)


def _single_run(spec: TrajectorySpec, seed: int, n_checkpoints: int = 101,
                raise_on_leak: bool = True) -> TrajectoryOutput:
    steps = np.unique(np.linspace(0, spec.n_steps, n_checkpoints).astype(np.int64))
    block = run_block(spec, master_seed=seed, start_index=0, n_traj=1,
                      checkpoint_steps=steps)
    leak = float(block.leak_max[0])
    valid = leak < spec.leak_tol
    if raise_on_leak and not valid:
        raise LeakageError(
            f"top-Fock population {leak:.2e} > {spec.leak_tol:.0e}; "
            f"increase fock_dim beyond {spec.space.fock_dim}")
    record = TrajectoryRecord(
        scheme=spec.scheme, dt=spec.dt, n_steps=spec.n_steps, seed=0,
        master_seed=seed, params=spec.params_dict(),
        events_step=block.events[0],
        events_channel=np.zeros(block.events[0].size, dtype=np.uint16),
    )
    return TrajectoryOutput(
        record=record, log_likelihood=float(block.lnp[0, -1, 0]),
        times=block.times, nbar=block.nbar[:, 0],
        sz=None if block.sz is None else block.sz[:, 0],
        leak_max=leak, valid=valid,
    )


def run_trajectory_perfect(params: RabiParams, t_final: float, dt: float, seed: int,
                           fock_dim: int, initial_fock: int = 0,
                           include_qubit: bool = True, leak_tol: float = LEAK_TOL,
                           **kw) -> TrajectoryOutput:
    """Photon-counting trajectory with unit-efficiency direct detection."""
    spec = perfect_spec(params, t_final, dt, fock_dim, initial_fock,
                        include_qubit=include_qubit, leak_tol=leak_tol)
    return _single_run(spec, seed, **kw)


def run_trajectory_ancilla(params: RabiParams | None, anc: AncillaParams,
                           t_final: float, dt: float, seed: int, fock_dim: int,
                           initial_fock: int = 0, include_system: bool = True,
                           leak_tol: float = LEAK_TOL, **kw) -> TrajectoryOutput:
    """Ancilla-mediated counting with detector efficiency ε (density-matrix unraveling)."""
    spec = ancilla_spec(params, anc, t_final, dt, fock_dim, initial_fock,
                        include_system=include_system, leak_tol=leak_tol)
    return _single_run(spec, seed, **kw)


def run_trajectory_noisy(params: RabiParams, noise: NoiseParams, t_final: float,
                         dt: float, seed: int, fock_dim: int,
                         initial_fock: int = 0, leak_tol: float = LEAK_TOL,
                         **kw) -> TrajectoryOutput:
    """Unit-efficiency counting with unmonitored decoherence channels."""
    spec = noisy_spec(params, noise, t_final, dt, fock_dim, initial_fock,
                      leak_tol=leak_tol)
    return _single_run(spec, seed, **kw)


def validate_step_doubling(spec: TrajectorySpec, seed: int = 0,
                           tol: float = 1e-4) -> dict:
    """Check a calibration trajectory against the same record run at dt/2.

    Generates one record at dt, replays it on the dt and dt/2 grids (events
    mapped to even steps), and compares ⟨n̂⟩ at the shared checkpoints.
    """
    out = _single_run(spec, seed, raise_on_leak=False)
    steps = np.unique(np.linspace(0, spec.n_steps, 41).astype(np.int64))
    base = run_block(spec, seed, 0, 1, steps, replay_events=[out.record.events_step])
    # same physical horizon on the doubled grid (t_final re-derived from the
    # step count so n_steps doubles exactly even when t_final/dt was rounded)
    fine_spec = replace(spec, dt=spec.dt / 2.0, t_final=spec.n_steps * spec.dt)
    fine = run_block(fine_spec, seed, 0, 1, steps * 2,
                     replay_events=[out.record.events_step.astype(np.uint64) * 2])
    err = float(np.abs(base.nbar[:, 0] - fine.nbar[:, 0]).max())
    return {"max_nbar_error": err, "passed": err < tol, "tol": tol}
