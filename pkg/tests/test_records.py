import numpy as np
import pytest

from rabisense.dynamics.records import (
    TrajectoryRecord,
    load_records,
    save_records,
)


def make_record(n_events=5, seed=3):
    rng = np.random.default_rng(seed)
    steps = np.sort(rng.choice(1000, size=n_events, replace=False)).astype(np.uint64)
    return TrajectoryRecord(
        scheme="perfect", dt=1e-3, n_steps=1000, seed=7, master_seed=123,
        params={"scheme": "perfect", "fock_dim": 8, "rabi": {"omega": 1.0}},
        events_step=steps,
        events_channel=np.zeros(n_events, dtype=np.uint16),
    )


def test_binary_round_trip():
    rec = make_record()
    back = TrajectoryRecord.from_bytes(rec.to_bytes())
    assert back.scheme == rec.scheme
    assert back.dt == rec.dt
    assert back.n_steps == rec.n_steps
    assert back.seed == rec.seed
    assert back.master_seed == rec.master_seed
    assert back.params == rec.params
    assert np.array_equal(back.events_step, rec.events_step)
    assert np.array_equal(back.events_channel, rec.events_channel)


def test_binary_deterministic():
    assert make_record().to_bytes() == make_record().to_bytes()


def test_text_round_trip():
    rec = make_record(n_events=3)
    back = TrajectoryRecord.from_text(rec.to_text())
    assert back.params == rec.params
    assert np.array_equal(back.events_step, rec.events_step)
    assert back.dt == rec.dt


def test_container_round_trip(tmp_path):
    recs = [make_record(n, seed=n) for n in (0, 2, 7)]
    path = tmp_path / "records.bin"
    save_records(path, recs)
    back = load_records(path)
    assert len(back) == 3
    for a, b in zip(recs, back):
        assert np.array_equal(a.events_step, b.events_step)
        assert a.params == b.params


def test_event_validation():
    with pytest.raises(ValueError):
        TrajectoryRecord("perfect", 1e-3, 10, 0, 0, {},
                         events_step=np.array([20], dtype=np.uint64),
                         events_channel=np.array([0], dtype=np.uint16))
    with pytest.raises(ValueError):
        TrajectoryRecord("perfect", 1e-3, 100, 0, 0, {},
                         events_step=np.array([5], dtype=np.uint64),
                         events_channel=np.array([3], dtype=np.uint16))


def test_grid_and_counts():
    rec = make_record(4)
    grid = rec.t_grid()
    assert grid.size == rec.n_steps + 1
    assert grid[-1] == pytest.approx(rec.t_final)
    times = rec.event_times()
    assert np.all(times > 0) and np.all(times <= rec.t_final + 1e-12)
    counts = rec.counts_up_to(np.array([rec.n_steps]))
    assert counts[0] == 4


def test_params_hash_stable():
    assert make_record().params_hash() == make_record().params_hash()
    other = make_record()
    other.params = dict(other.params, fock_dim=9)
    assert other.params_hash() != make_record().params_hash()
