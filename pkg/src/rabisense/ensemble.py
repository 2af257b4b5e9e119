"""Reproducible block-parallel execution of trajectory ensembles.

Trajectories are partitioned into fixed-size blocks regardless of worker
count; each block is a deterministic function of (spec, master seed, block
start), so any scheduling of blocks over workers produces identical results.
Aggregation concatenates blocks in index order.  Blocks can be cached on
disk and reloaded, which gives interrupt/resume for free.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .dynamics.records import TrajectoryRecord, params_hash
from .dynamics.trajectories import BlockResult, TrajectorySpec, run_block

DEFAULT_BLOCK_SIZE = 256

_WORKER_ENV = {
    "OPENBLAS_NUM_THREADS": "1",
    "MKL_NUM_THREADS": "1",
    "OMP_NUM_THREADS": "1",
    "NUMEXPR_NUM_THREADS": "1",
}


@dataclass
class EnsembleResult:
    spec: TrajectorySpec
    master_seed: int
    checkpoint_steps: np.ndarray
    times: np.ndarray
    variants: tuple
    lnp: np.ndarray        # (V, C, n_traj)
    nbar: np.ndarray       # (C, n_traj)
    sz: np.ndarray | None
    leak_max: np.ndarray
    n_jumps: np.ndarray
    events: list
    min_eig: float | None

    @property
    def n_traj(self) -> int:
        return self.lnp.shape[2]

    @property
    def quarantined(self) -> np.ndarray:
        """Trajectory indices whose truncation leakage exceeded leak_tol."""
        return np.nonzero(self.leak_max >= self.spec.leak_tol)[0]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.leak_max < self.spec.leak_tol

    def records(self) -> list:
        params = self.spec.params_dict()
        return [
            TrajectoryRecord(
                scheme=self.spec.scheme, dt=self.spec.dt, n_steps=self.spec.n_steps,
                seed=j, master_seed=self.master_seed, params=params,
                events_step=self.events[j],
                events_channel=np.zeros(self.events[j].size, dtype=np.uint16),
            )
            for j in range(self.n_traj)
        ]


def block_partition(n_traj: int, block_size: int = DEFAULT_BLOCK_SIZE):
    """Fixed partition [(start, count), ...] independent of worker count."""
    return [(s, min(block_size, n_traj - s)) for s in range(0, n_traj, block_size)]


def _block_meta(spec, master_seed, start, count, ckpt, variants) -> str:
    return json.dumps({
        "params": params_hash(spec.params_dict()),
        "master_seed": int(master_seed),
        "start": int(start),
        "count": int(count),
        "ckpt": [int(k) for k in ckpt],
        "variants": [[str(n), float(d)] for n, d in variants],
    }, sort_keys=True)


def _block_path(cache_dir, start) -> str:
    return os.path.join(cache_dir, f"block_{start:08d}.npz")


def _save_block(path, meta, blk: BlockResult) -> None:
    offs = np.cumsum([0] + [ev.size for ev in blk.events]).astype(np.int64)
    flat = np.concatenate(blk.events) if blk.events else np.empty(0, np.uint64)
    tmp = path + ".tmp.npz"
    np.savez_compressed(
        tmp, meta=np.frombuffer(meta.encode(), dtype=np.uint8),
        lnp=blk.lnp, nbar=blk.nbar,
        sz=blk.sz if blk.sz is not None else np.empty(0),
        leak_max=blk.leak_max, n_jumps=blk.n_jumps,
        events_flat=flat, events_offsets=offs,
        checkpoint_steps=blk.checkpoint_steps,
        min_eig=np.array(np.nan if blk.min_eig is None else blk.min_eig),
    )
    os.replace(tmp, path)


def _load_block(path, meta, start) -> BlockResult | None:
    if not os.path.exists(path):
        return None
    with np.load(path) as data:
        if bytes(data["meta"]).decode() != meta:
            return None
        offs = data["events_offsets"]
        flat = data["events_flat"]
        events = [flat[offs[i]:offs[i + 1]].astype(np.uint64)
                  for i in range(len(offs) - 1)]
        sz = data["sz"]
        me = float(data["min_eig"])
        return BlockResult(
            start_index=start, checkpoint_steps=data["checkpoint_steps"],
            times=None, lnp=data["lnp"], nbar=data["nbar"],
            sz=None if sz.size == 0 else sz, leak_max=data["leak_max"],
            n_jumps=data["n_jumps"], events=events,
            min_eig=None if np.isnan(me) else me,
        )


def _block_task(args):
    spec, master_seed, start, count, ckpt, variants, positivity_sample = args
    return start, run_block(spec, master_seed, start, count, ckpt,
                            variants=variants, positivity_sample=positivity_sample)


def run_ensemble(spec: TrajectorySpec, n_traj: int, checkpoint_steps,
                 master_seed: int, variants=(("omega", 0.0),),
                 block_size: int = DEFAULT_BLOCK_SIZE, workers: int = 0,
                 cache_dir: str | None = None,
                 positivity_sample: int = 0) -> EnsembleResult:
    """Run n_traj trajectories in deterministic blocks, optionally in parallel.

    workers = 0 runs inline in this process; workers >= 1 uses a spawn-based
    process pool with BLAS threading pinned to one thread in the children, so
    results are byte-identical for any worker count >= 1.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    ckpt = np.unique(np.asarray(checkpoint_steps, dtype=np.int64))
    variants = tuple((str(n), float(d)) for n, d in variants)
    parts = block_partition(n_traj, block_size)
    results: dict[int, BlockResult] = {}
    todo = []

    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
    for start, count in parts:
        blk = None
        if cache_dir is not None:
            meta = _block_meta(spec, master_seed, start, count, ckpt, variants)
            blk = _load_block(_block_path(cache_dir, start), meta, start)
        if blk is None:
            todo.append((spec, master_seed, start, count, ckpt, variants,
                         positivity_sample))
        else:
            results[start] = blk

    if todo:
        if workers and workers > 0 and len(todo) > 1:
            import multiprocessing as mp

            for key, val in _WORKER_ENV.items():
                os.environ.setdefault(key, val)
            ctx = mp.get_context("spawn")
            with ctx.Pool(processes=workers) as pool:
                for start, blk in pool.imap_unordered(_block_task, todo):
                    results[start] = blk
        else:
            for args in todo:
                start, blk = _block_task(args)
                results[start] = blk
        if cache_dir is not None:
            for start, count in parts:
                meta = _block_meta(spec, master_seed, start, count, ckpt, variants)
                path = _block_path(cache_dir, start)
                if not os.path.exists(path):
                    _save_block(path, meta, results[start])

    ordered = [results[start] for start, _ in parts]
    lnp = np.concatenate([b.lnp for b in ordered], axis=2)
    nbar = np.concatenate([b.nbar for b in ordered], axis=1)
    sz = None if ordered[0].sz is None else np.concatenate(
        [b.sz for b in ordered], axis=1)
    leak = np.concatenate([b.leak_max for b in ordered])
    n_jumps = np.concatenate([b.n_jumps for b in ordered])
    events = [ev for b in ordered for ev in b.events]
    eigs = [b.min_eig for b in ordered if b.min_eig is not None]
    return EnsembleResult(
        spec=spec, master_seed=master_seed, checkpoint_steps=ckpt,
        times=ckpt * spec.dt, variants=variants, lnp=lnp, nbar=nbar, sz=sz,
        leak_max=leak, n_jumps=n_jumps, events=events,
        min_eig=min(eigs) if eigs else None,
    )


def replay_ensemble(spec: TrajectorySpec, events_list, checkpoint_steps,
                    variants=(("omega", 0.0),),
                    block_size: int = DEFAULT_BLOCK_SIZE) -> EnsembleResult:
    """Deterministically re-integrate stored event sequences (no RNG)."""
    ckpt = np.unique(np.asarray(checkpoint_steps, dtype=np.int64))
    variants = tuple((str(n), float(d)) for n, d in variants)
    blocks = []
    for start, count in block_partition(len(events_list), block_size):
        blocks.append(run_block(spec, 0, start, count, ckpt, variants=variants,
                                replay_events=events_list[start:start + count]))
    lnp = np.concatenate([b.lnp for b in blocks], axis=2)
    nbar = np.concatenate([b.nbar for b in blocks], axis=1)
    sz = None if blocks[0].sz is None else np.concatenate([b.sz for b in blocks], axis=1)
    return EnsembleResult(
        spec=spec, master_seed=0, checkpoint_steps=ckpt, times=ckpt * spec.dt,
        variants=variants, lnp=lnp, nbar=nbar, sz=sz,
        leak_max=np.concatenate([b.leak_max for b in blocks]),
        n_jumps=np.concatenate([b.n_jumps for b in blocks]),
        events=list(events_list), min_eig=None,
    )
