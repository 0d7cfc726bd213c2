"""Byte-addressable ReRAM chip simulator with a busy-time clock and binary images.

One :class:`~rrwm.cell.CellState` worth of state is kept per byte address,
stored column-wise in numpy arrays. Writing ``0x00`` over ``0xFF`` is a set,
``0xFF`` over ``0x00`` a reset; a stress pair completes once eight bits have
been driven back to HRS (0 -> 1), so mixed-byte writes contribute fractional
pairs.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import cell as _cell
from .cell import DEFAULT_MODEL, RESET, SET, CellState, TimingModel
from .errors import (
    AddressError,
    BadMagicError,
    CellFailureError,
    ImageFormatError,
    TruncatedImageError,
    VersionMismatchError,
)

DEFAULT_CELLS = 1_048_576  # 8 Mb
BUFFER_SIZE = 256
T_BUFFERED = 5e-3  # per buffered write command, either direction
T_VERIFY = 20e-6  # write of an already-stored value
T_TIMEOUT = 1e-3  # write to a failed cell
ERASED = 0xFF

MAGIC = b"RRWM"
VERSION = 1
_HEADER = struct.Struct("<4sIQ" + "d" * len(TimingModel.field_names()) + "Q")
HEADER_SIZE = _HEADER.size
CELL_DTYPE = np.dtype(
    [("stress", "<u4"), ("variation", "<f8"), ("endurance_limit", "<u4"), ("flags", "u1")]
)
RECORD_SIZE = CELL_DTYPE.itemsize

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def image_size(cell_count):
    return HEADER_SIZE + cell_count * RECORD_SIZE


@dataclass
class BusyClock:
    """Cumulative simulated device-busy time in seconds."""

    elapsed: float = 0.0

    def advance(self, seconds):
        if seconds < 0:
            raise ValueError("clock cannot run backwards")
        self.elapsed += seconds
        return seconds


class Device:
    """Simulated MB85AS8MT-class ReRAM chip.

    Build fresh devices with :meth:`new`; restore saved ones with :meth:`load`.
    ``temperature`` is the operating temperature used when an operation is not
    given one explicitly.
    """

    def __init__(self, model, seed, variation, endurance_limit, stress=None, partial=None, data=None):
        n = len(variation)
        self.model = model
        self.seed = int(seed)
        self.variation = np.asarray(variation, dtype=np.float64)
        self.endurance_limit = np.asarray(endurance_limit, dtype=np.int64)
        self.stress = np.zeros(n, np.int64) if stress is None else np.asarray(stress, np.int64)
        self.partial = np.zeros(n, np.int64) if partial is None else np.asarray(partial, np.int64)
        self.data = np.full(n, ERASED, np.uint8) if data is None else np.asarray(data, np.uint8)
        self.clock = BusyClock()
        self.temperature = _cell.REFERENCE_TEMP
        if not (len(self.endurance_limit) == len(self.stress) == len(self.partial) == len(self.data) == n):
            raise ValueError("cell arrays must share one length")

    @classmethod
    def new(cls, cell_count=DEFAULT_CELLS, seed=0, model=DEFAULT_MODEL, regional_fraction=0.8, region_size=BUFFER_SIZE):
        if cell_count <= 0:
            raise ValueError("cell_count must be positive")
        rng = np.random.default_rng(seed)
        variation = _cell.sample_variations(rng, cell_count, model.cell_spread, regional_fraction, region_size)
        limits = _cell.sample_endurance_limits(rng, cell_count, int(model.rated_endurance))
        return cls(model, seed, variation, limits)

    @property
    def cell_count(self):
        return len(self.data)

    @property
    def failed(self):
        return self.stress >= self.endurance_limit

    def __repr__(self):
        return f"Device(cells={self.cell_count}, seed={self.seed}, busy={self.clock.elapsed:.6g}s)"

    def cell(self, address):
        """Snapshot of one cell as a :class:`CellState` (logic value 1 iff HRS-majority)."""
        self._check_range(address, 1)
        return CellState(
            stress_count=int(self.stress[address]),
            variation=float(self.variation[address]),
            value=int(_POPCOUNT[self.data[address]] >= 4),
            endurance_limit=int(self.endurance_limit[address]),
            address=address,
        )

    def _check_range(self, start, length):
        if start < 0 or length < 0 or start + length > self.cell_count:
            raise AddressError(
                f"range [{start:#x}, {start + length:#x}) outside device of {self.cell_count} cells"
            )

    def _temp(self, temperature):
        return self.temperature if temperature is None else temperature

    def _transition(self, addr, new, temperature, timed):
        """Apply byte writes at unique ``addr``; return per-address latency and failure mask."""
        old = self.data[addr]
        dead = self.stress[addr] >= self.endurance_limit[addr]
        up = _POPCOUNT[~old & new]
        down = _POPCOUNT[old & ~new]

        times = None
        if timed:
            s, p = self.stress[addr], self.partial[addr]
            m = self.model
            noise_set = noise_reset = None
            if m.meas_noise > 0:
                noise_set = _cell.keyed_normal(self.seed, addr, s, p, SET)
                noise_reset = _cell.keyed_normal(self.seed, addr, s, p, RESET)
            t_set = m.latency(s, self.variation[addr], SET, temperature, noise_set)
            t_reset = m.latency(s, self.variation[addr], RESET, temperature, noise_reset)
            times = np.where(down > 0, t_set, 0.0) + np.where(up > 0, t_reset, 0.0)
            times = np.where((up == 0) & (down == 0), T_VERIFY, times)
            times = np.where(dead, T_TIMEOUT, times)

        live = addr[~dead]
        self.data[live] = new[~dead] if np.ndim(new) else new
        total = self.partial[live] + up[~dead]
        stress = self.stress[live] + total // 8
        partial = total % 8
        worn = stress >= self.endurance_limit[live]
        partial[worn] = 0
        self.stress[live] = np.minimum(stress, self.endurance_limit[live])
        self.partial[live] = partial
        return times, dead

    def write_byte(self, address, value, temperature=None):
        """Single-address write; returns the simulated latency in seconds.

        Raises :class:`CellFailureError` (after charging the timeout) when the
        cell is worn out.
        """
        self._check_range(address, 1)
        addr = np.array([address])
        times, dead = self._transition(addr, np.uint8(value), self._temp(temperature), timed=True)
        elapsed = self.clock.advance(float(times[0]))
        if dead[0]:
            raise CellFailureError(address, int(self.stress[address]), elapsed)
        return elapsed

    def timed_writes(self, addresses, value, temperature=None):
        """Issue one single-address write of ``value`` to each address in turn.

        Equivalent to calling :meth:`write_byte` per address, except failures
        are returned as a mask instead of raised. Returns ``(latencies, failed)``.
        """
        addr = np.asarray(addresses, dtype=np.int64)
        if addr.size == 0:
            return np.zeros(0), np.zeros(0, bool)
        if addr.min() < 0 or addr.max() >= self.cell_count:
            raise AddressError("address outside device")
        if np.unique(addr).size != addr.size:
            raise ValueError("addresses must be unique")
        times, dead = self._transition(addr, np.uint8(value), self._temp(temperature), timed=True)
        self.clock.advance(float(times.sum()))
        return times, dead

    def write_buffered(self, start, data, temperature=None):
        """Write up to 256 consecutive bytes with one command (fixed 5 ms)."""
        buf = np.frombuffer(bytes(data), dtype=np.uint8) if not isinstance(data, np.ndarray) else data.astype(np.uint8)
        if len(buf) > BUFFER_SIZE:
            raise ValueError(f"buffered write limited to {BUFFER_SIZE} bytes")
        self._check_range(start, len(buf))
        if len(buf) == 0:
            return 0.0
        addr = np.arange(start, start + len(buf))
        self._transition(addr, buf, self._temp(temperature), timed=False)
        return self.clock.advance(T_BUFFERED)

    def fill(self, start, length, value, temperature=None):
        """Buffered writes of ``value`` over an arbitrary range, 256 bytes per command."""
        self._check_range(start, length)
        elapsed = 0.0
        for chunk in range(start, start + length, BUFFER_SIZE):
            n = min(BUFFER_SIZE, start + length - chunk)
            elapsed += self.write_buffered(chunk, np.full(n, value, np.uint8), temperature)
        return elapsed

    def cycle(self, start, length, pairs, temperature=None):
        """Apply ``pairs`` rounds of all-0 then all-1 buffered writes to a range.

        Produces the same cell state and busy time as the explicit loop of
        :meth:`fill` calls but in constant time per call.
        """
        self._check_range(start, length)
        return self.cycle_runs([(start, length)], pairs, temperature)

    def cycle_runs(self, runs, pairs, temperature=None):
        """:meth:`cycle` over several disjoint ``(start, length)`` runs at once."""
        runs = [(int(s), int(n)) for s, n in runs if n > 0]
        if pairs <= 0 or not runs:
            return 0.0
        for s, n in runs:
            self._check_range(s, n)
        addr = np.concatenate([np.arange(s, s + n) for s, n in runs])
        elapsed = 0.0
        live = self.stress[addr] < self.endurance_limit[addr]
        if np.any(self.data[addr][live] != ERASED):
            for s, n in runs:
                elapsed += self.fill(s, n, 0x00, temperature)
            for s, n in runs:
                elapsed += self.fill(s, n, ERASED, temperature)
            pairs -= 1
        if pairs > 0:
            stress = self.stress[addr]
            limit = self.endurance_limit[addr]
            live = stress < limit
            bumped = np.minimum(stress + pairs, limit)
            worn = live & (bumped >= limit)
            self.stress[addr] = np.where(live, bumped, stress)
            self.partial[addr] = np.where(worn, 0, self.partial[addr])
            n_cmds = sum(-(-n // BUFFER_SIZE) for _, n in runs)
            elapsed += self.clock.advance(pairs * 2 * n_cmds * T_BUFFERED)
        return elapsed

    def read_byte(self, address):
        """Stored byte; reading never stresses a cell."""
        self._check_range(address, 1)
        return int(self.data[address])

    def read_status(self, address):
        """``(stored byte, failed)`` for one address."""
        self._check_range(address, 1)
        return int(self.data[address]), bool(self.stress[address] >= self.endurance_limit[address])

    def to_image(self):
        return DeviceImage.from_device(self)

    @classmethod
    def from_image(cls, image):
        rec = image.cells
        packed = rec["stress"].astype(np.int64)
        return cls(
            image.model,
            image.rng_seed,
            rec["variation"].copy(),
            rec["endurance_limit"].astype(np.int64),
            stress=packed // 8,
            partial=packed % 8,
            data=rec["flags"].copy(),
        )

    def save(self, sink):
        save_image(self, sink)

    @classmethod
    def load(cls, source):
        return cls.from_image(load_image(source))


@dataclass
class DeviceImage:
    """Bit-exact snapshot of a device.

    The per-cell ``stress`` field stores eighths of a pair (``8 * pairs +
    partial``) and ``flags`` stores the raw data byte; failure is implied by
    ``stress // 8 >= endurance_limit``.
    """

    model: TimingModel
    rng_seed: int
    cells: np.ndarray = field(repr=False)
    version: int = VERSION

    @property
    def cell_count(self):
        return len(self.cells)

    @classmethod
    def from_device(cls, device):
        cells = np.empty(device.cell_count, dtype=CELL_DTYPE)
        cells["stress"] = device.stress * 8 + device.partial
        cells["variation"] = device.variation
        cells["endurance_limit"] = device.endurance_limit
        cells["flags"] = device.data
        return cls(device.model, device.seed, cells)

    def to_bytes(self):
        m = self.model
        header = _HEADER.pack(
            MAGIC, self.version, self.cell_count,
            *(float(getattr(m, name)) for name in TimingModel.field_names()),
            self.rng_seed & 0xFFFFFFFFFFFFFFFF,
        )
        return header + self.cells.tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < 8:
            raise TruncatedImageError("image shorter than magic and version")
        magic, version = struct.unpack_from("<4sI", blob)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise VersionMismatchError(f"image version {version}, expected {VERSION}")
        if len(blob) < HEADER_SIZE:
            raise TruncatedImageError("image header truncated")
        values = _HEADER.unpack_from(blob)
        cell_count = values[2]
        params = dict(zip(TimingModel.field_names(), values[3:-1]))
        seed = values[-1]
        expected = image_size(cell_count)
        if len(blob) < expected:
            raise TruncatedImageError(f"image has {len(blob)} bytes, expected {expected}")
        if len(blob) > expected:
            raise ImageFormatError(f"{len(blob) - expected} trailing bytes after cell array")
        try:
            model = TimingModel(**params)
        except ValueError as exc:
            raise ImageFormatError(f"invalid timing model in header: {exc}") from exc
        cells = np.frombuffer(blob, dtype=CELL_DTYPE, count=cell_count, offset=HEADER_SIZE).copy()
        return cls(model, seed, cells, version)


def save_image(device, sink):
    """Write ``device`` to a path or binary file object."""
    blob = DeviceImage.from_device(device).to_bytes()
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(blob)
    else:
        sink.write(blob)


def load_image(source):
    """Parse a device image from a path, bytes, or binary file object."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        blob = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            blob = fh.read()
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        blob = source.read()
    else:
        raise TypeError(f"cannot load image from {type(source).__name__}")
    return DeviceImage.from_bytes(blob)
