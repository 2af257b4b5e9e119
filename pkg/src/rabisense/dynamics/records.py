"""Detection-record container with a versioned binary layout and text export.

Binary layout (all little-endian), one record:

    offset  size  field
    0       4     magic  b"RBR1"
    4       2     format version (currently 1)
    6       1     scheme id (0 perfect, 1 ancilla, 2 noisy)
    7       1     reserved (0)
    8       8     n_steps           (uint64)
    16      8     dt                (float64)
    24      8     trajectory index  (uint64; Philox counter offset)
    32      8     master seed       (uint64; Philox key)
    40      2     number of monitored channels (uint16)
    42      4     params blob length P (uint32)
    46      P     params blob: canonical JSON, utf-8
    46+P    8     n_events          (uint64)
    then n_events × (uint64 step index, uint16 channel id)

A container file is b"RBRC", uint16 version, uint32 record count, then each
record blob prefixed by its uint64 byte length.  The text export is one
event per line, "step_index,channel_id", with '#'-prefixed header lines.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

_MAGIC = b"RBR1"
_CONTAINER_MAGIC = b"RBRC"
FORMAT_VERSION = 1

SCHEME_IDS = {"perfect": 0, "ancilla": 1, "noisy": 2}
SCHEME_NAMES = {v: k for k, v in SCHEME_IDS.items()}


def canonical_params_json(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def params_hash(params: dict) -> str:
    return hashlib.sha256(canonical_params_json(params).encode()).hexdigest()[:16]


@dataclass
class TrajectoryRecord:
    """Time grid plus jump events: the raw detection signal of one trajectory."""

    scheme: str
    dt: float
    n_steps: int
    seed: int
    master_seed: int
    params: dict
    events_step: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint64))
    events_channel: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint16))
    n_channels: int = 1

    def __post_init__(self):
        self.events_step = np.asarray(self.events_step, dtype=np.uint64)
        self.events_channel = np.asarray(self.events_channel, dtype=np.uint16)
        if self.events_step.shape != self.events_channel.shape:
            raise ValueError("event step/channel arrays must have equal length")
        if self.events_step.size and int(self.events_step.max()) >= self.n_steps:
            raise ValueError("event step index outside the grid")
        if self.events_channel.size and int(self.events_channel.max()) >= self.n_channels:
            raise ValueError("event channel id outside the monitored channels")

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    def t_grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def event_times(self) -> np.ndarray:
        """An event at step k happened during (k·dt, (k+1)·dt]; report (k+1)·dt."""
        return (self.events_step.astype(np.float64) + 1.0) * self.dt

    def counts_up_to(self, steps: np.ndarray) -> np.ndarray:
        """Accumulated detection signal at the given step indices."""
        return np.searchsorted(self.events_step, np.asarray(steps), side="right")

    def params_hash(self) -> str:
        return params_hash(self.params)

    def to_bytes(self) -> bytes:
        blob = canonical_params_json(self.params).encode()
        head = struct.pack(
            "<4sHBBQdQQHI",
            _MAGIC, FORMAT_VERSION, SCHEME_IDS[self.scheme], 0,
            self.n_steps, self.dt, self.seed, self.master_seed,
            self.n_channels, len(blob),
        )
        ev = struct.pack("<Q", self.events_step.size)
        body = bytearray()
        for s, c in zip(self.events_step, self.events_channel):
            body += struct.pack("<QH", int(s), int(c))
        return head + blob + ev + bytes(body)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrajectoryRecord":
        head_size = struct.calcsize("<4sHBBQdQQHI")
        (magic, version, scheme_id, _flags, n_steps, dt, seed, master,
         n_channels, blob_len) = struct.unpack("<4sHBBQdQQHI", data[:head_size])
        if magic != _MAGIC:
            raise ValueError("not a trajectory record blob")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported record format version {version}")
        ofs = head_size
        params = json.loads(data[ofs:ofs + blob_len].decode())
        ofs += blob_len
        (n_events,) = struct.unpack("<Q", data[ofs:ofs + 8])
        ofs += 8
        steps = np.empty(n_events, dtype=np.uint64)
        chans = np.empty(n_events, dtype=np.uint16)
        for i in range(n_events):
            s, c = struct.unpack("<QH", data[ofs:ofs + 10])
            steps[i], chans[i] = s, c
            ofs += 10
        return cls(scheme=SCHEME_NAMES[scheme_id], dt=dt, n_steps=n_steps,
                   seed=seed, master_seed=master, params=params,
                   events_step=steps, events_channel=chans, n_channels=n_channels)

    def to_text(self) -> str:
        lines = [
            f"# scheme={self.scheme}",
            f"# dt={self.dt!r}",
            f"# n_steps={self.n_steps}",
            f"# seed={self.seed}",
            f"# master_seed={self.master_seed}",
            f"# n_channels={self.n_channels}",
            f"# params={canonical_params_json(self.params)}",
            "# step_index,channel_id",
        ]
        lines += [f"{int(s)},{int(c)}" for s, c in zip(self.events_step, self.events_channel)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrajectoryRecord":
        meta = {}
        steps, chans = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    meta[key.strip()] = val.strip()
                continue
            s, c = line.split(",")
            steps.append(int(s))
            chans.append(int(c))
        return cls(
            scheme=meta["scheme"], dt=float(meta["dt"]), n_steps=int(meta["n_steps"]),
            seed=int(meta["seed"]), master_seed=int(meta["master_seed"]),
            params=json.loads(meta["params"]),
            events_step=np.array(steps, dtype=np.uint64),
            events_channel=np.array(chans, dtype=np.uint16),
            n_channels=int(meta.get("n_channels", 1)),
        )


def save_records(path, records) -> None:
    with open(path, "wb") as fh:
        fh.write(_CONTAINER_MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(records)))
        for rec in records:
            blob = rec.to_bytes()
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)


def load_records(path) -> list[TrajectoryRecord]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _CONTAINER_MAGIC:
        raise ValueError(f"{path} is not a record container")
    version, count = struct.unpack("<HI", data[4:10])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported container version {version}")
    out = []
    ofs = 10
    for _ in range(count):
        (length,) = struct.unpack("<Q", data[ofs:ofs + 8])
        ofs += 8
        out.append(TrajectoryRecord.from_bytes(data[ofs:ofs + length]))
        ofs += length
    return out
