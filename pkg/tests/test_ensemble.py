import numpy as np
import pytest

from rabisense.dynamics import perfect_spec, run_block
from rabisense.ensemble import (
    block_partition,
    replay_ensemble,
    run_ensemble,
)
from rabisense.models import RabiParams, tune_to_cp

DECAY = RabiParams(omega=0.0, Omega_q=0.0, lambda_c=0.0, kappa=0.5)


def small_spec(t_final=6.0):
    return perfect_spec(DECAY, t_final, 2e-3, 3, initial_fock=1)


def test_block_partition_fixed():
    assert block_partition(10, 4) == [(0, 4), (4, 4), (8, 2)]
    assert block_partition(4, 8) == [(0, 4)]


def test_ensemble_matches_plain_blocks():
    spec = small_spec()
    ck = [0, spec.n_steps // 2, spec.n_steps]
    ens = run_ensemble(spec, 10, ck, master_seed=5, block_size=4)
    direct = run_block(spec, 5, 0, 10, ck)
    # block-partitioned execution agrees bit-for-bit with one large batch here
    assert np.array_equal(ens.lnp, direct.lnp)
    assert np.array_equal(ens.nbar, direct.nbar)
    for a, b in zip(ens.events, direct.events):
        assert np.array_equal(a, b)


def test_ensemble_block_size_invariance():
    spec = small_spec()
    ck = [spec.n_steps]
    a = run_ensemble(spec, 12, ck, master_seed=9, block_size=3)
    b = run_ensemble(spec, 12, ck, master_seed=9, block_size=12)
    assert np.array_equal(a.lnp, b.lnp)


def test_ensemble_workers_identical(tmp_path):
    spec = small_spec(3.0)
    ck = [spec.n_steps]
    serial = run_ensemble(spec, 8, ck, master_seed=3, block_size=2, workers=0)
    pooled = run_ensemble(spec, 8, ck, master_seed=3, block_size=2, workers=2)
    assert np.array_equal(serial.lnp, pooled.lnp)
    assert np.array_equal(serial.n_jumps, pooled.n_jumps)


def test_ensemble_cache_and_resume(tmp_path):
    spec = small_spec(3.0)
    ck = [spec.n_steps]
    cache = str(tmp_path / "blocks")
    first = run_ensemble(spec, 9, ck, master_seed=11, block_size=4, cache_dir=cache)
    import os
    files = sorted(os.listdir(cache))
    assert len(files) == 3
    # delete one block: the rerun recomputes only that block, identically
    os.remove(os.path.join(cache, files[1]))
    second = run_ensemble(spec, 9, ck, master_seed=11, block_size=4, cache_dir=cache)
    assert np.array_equal(first.lnp, second.lnp)
    for a, b in zip(first.events, second.events):
        assert np.array_equal(a, b)
    # cache keyed on the parameters: a different seed ignores stale blocks
    third = run_ensemble(spec, 9, ck, master_seed=12, block_size=4,
                         cache_dir=str(tmp_path / "other"))
    assert not np.array_equal(first.lnp, third.lnp)


def test_records_round_trip_through_ensemble():
    spec = small_spec(3.0)
    ens = run_ensemble(spec, 5, [spec.n_steps], master_seed=2)
    recs = ens.records()
    assert len(recs) == 5
    assert all(r.master_seed == 2 for r in recs)
    assert [r.seed for r in recs] == list(range(5))
    rep = replay_ensemble(spec, [r.events_step for r in recs], [spec.n_steps])
    assert np.allclose(rep.lnp[0, -1], ens.lnp[0, -1])


def test_quarantine_mask():
    params = tune_to_cp(1.0, 30.0, 0.05)
    spec = perfect_spec(params, 15.0, 5e-3, 5)  # deliberately tiny space
    ens = run_ensemble(spec, 4, [spec.n_steps], master_seed=1)
    assert ens.quarantined.size == 4  # everything leaks
    assert not ens.valid_mask.any()
