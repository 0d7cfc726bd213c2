"""Characterization, imprinting, extraction and threshold decoding.

A watermark bit lives in ``n_rep`` consecutive addresses. Logic 1 is written
by cycling those addresses through ``N`` set-reset pairs; logic 0 addresses
stay fresh. Reading times one set and one reset per address and compares the
range average against a threshold.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .cell import RESET, SET
from .device import BUFFER_SIZE, ERASED, T_BUFFERED, Device
from .errors import (
    BudgetExceededError,
    LayoutError,
    NonSeparableError,
    NotFreshError,
    UnreadableBitError,
)

CHANNELS = {"set": SET, "reset": RESET}
DEFAULT_BITS = 32
DEFAULT_N_REP = 256
DEFAULT_PAIRS = 10_000
BUDGET_CAP = 0.10
SERIES_HEADER = ["group", "stress_count", "t_set_256_s", "t_reset_256_s"]


def channel_index(channel):
    if channel in (SET, RESET):
        return channel
    try:
        return CHANNELS[channel]
    except KeyError:
        raise ValueError(f"channel must be 'set' or 'reset', got {channel!r}") from None


def parse_watermark(text, n_bits=None):
    """Hex string to a most-significant-first bit array."""
    s = text.strip().lower()
    if s.startswith("0x"):
        s = s[2:]
    if not s:
        raise ValueError("empty watermark")
    value = int(s, 16)
    if n_bits is None:
        n_bits = 4 * len(s)
    if value >> n_bits:
        raise ValueError(f"watermark {text!r} does not fit in {n_bits} bits")
    return np.array([(value >> (n_bits - 1 - i)) & 1 for i in range(n_bits)], dtype=np.uint8)


def bits_to_int(bits):
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def bits_to_hex(bits):
    width = -(-len(bits) // 4)
    return f"{bits_to_int(bits):0{width}X}"


@dataclass
class WatermarkLayout:
    """Where and how hard each watermark bit is written.

    ``starts[i]`` is the first of ``n_rep`` consecutive addresses that carry
    ``bits[i]``; ``pairs`` is the stress budget applied to 1-bits.
    """

    bits: np.ndarray
    starts: np.ndarray
    n_rep: int = DEFAULT_N_REP
    pairs: int = DEFAULT_PAIRS

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.starts = np.asarray(self.starts, dtype=np.int64)
        if len(self.bits) != len(self.starts):
            raise LayoutError("one start address per bit required")
        if self.n_rep <= 0:
            raise LayoutError("n_rep must be positive")
        if self.pairs < 0:
            raise LayoutError("stress budget must be non-negative")
        if np.any((self.bits != 0) & (self.bits != 1)):
            raise LayoutError("watermark bits must be 0 or 1")
        if np.any(self.starts < 0):
            raise LayoutError("negative start address")
        order = np.sort(self.starts)
        if np.any(np.diff(order) < self.n_rep):
            raise LayoutError("watermark address ranges overlap")

    @classmethod
    def contiguous(cls, watermark, base=0, n_rep=DEFAULT_N_REP, pairs=DEFAULT_PAIRS, n_bits=None):
        """Back-to-back ranges starting at ``base``; ``watermark`` is hex or a bit array."""
        if isinstance(watermark, str):
            bits = parse_watermark(watermark, n_bits if n_bits else DEFAULT_BITS)
        else:
            bits = np.asarray(watermark, dtype=np.uint8)
        starts = base + n_rep * np.arange(len(bits))
        return cls(bits, starts, n_rep, pairs)

    @property
    def n_bits(self):
        return len(self.bits)

    @property
    def popcount(self):
        return int(self.bits.sum())

    @property
    def hex(self):
        return bits_to_hex(self.bits)

    def ranges(self):
        return [(int(s), self.n_rep) for s in self.starts]

    def addresses(self):
        return (self.starts[:, None] + np.arange(self.n_rep)).ravel()

    def with_bits(self, bits):
        return WatermarkLayout(bits, self.starts, self.n_rep, self.pairs)

    def check_budget(self, rated_endurance, cap=BUDGET_CAP):
        if self.pairs > cap * rated_endurance:
            raise BudgetExceededError(
                f"{self.pairs} pairs exceeds {cap:.0%} of rated endurance ({rated_endurance:.0f} pairs)"
            )

    def check_fits(self, device):
        if len(self.starts) and self.starts.max() + self.n_rep > device.cell_count:
            raise LayoutError(
                f"layout ends at {self.starts.max() + self.n_rep:#x}, device has {device.cell_count} cells"
            )


def write_layout(layout, sink):
    """Layout file: one ``bit_index, start_address, n_rep`` line per bit."""
    lines = [f"{i}, {int(s)}, {layout.n_rep}" for i, s in enumerate(layout.starts)]
    text = "\n".join(lines) + "\n"
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w") as fh:
            fh.write(text)
    else:
        sink.write(text)


def read_layout(source, watermark=None, pairs=DEFAULT_PAIRS):
    """Parse a layout file. Bits default to zero until a watermark is supplied."""
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            text = fh.read()
    else:
        text = source.read()
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise LayoutError(f"line {lineno}: expected 'bit_index, start_address, n_rep'")
        try:
            rows.append(tuple(int(p, 0) for p in parts))
        except ValueError:
            raise LayoutError(f"line {lineno}: non-integer field") from None
    if not rows:
        raise LayoutError("layout file has no entries")
    rows.sort()
    idx = [r[0] for r in rows]
    if idx != list(range(len(rows))):
        raise LayoutError("bit indices must run 0..B-1 without gaps")
    n_reps = {r[2] for r in rows}
    if len(n_reps) != 1:
        raise LayoutError("all bits must use the same n_rep")
    starts = [r[1] for r in rows]
    if watermark is None:
        bits = np.zeros(len(rows), np.uint8)
    elif isinstance(watermark, str):
        bits = parse_watermark(watermark, len(rows))
    else:
        bits = np.asarray(watermark, np.uint8)
    return WatermarkLayout(bits, starts, n_reps.pop(), pairs)


@dataclass
class MeasurementSeries:
    """Group-averaged set/reset times at a sequence of stress counts.

    ``t_set`` and ``t_reset`` have shape ``(groups, levels)``; a NaN marks a
    group whose cells had all failed at that level.
    """

    stress: np.ndarray
    t_set: np.ndarray
    t_reset: np.ndarray
    groups: np.ndarray = None

    def __post_init__(self):
        self.stress = np.asarray(self.stress, dtype=np.int64)
        self.t_set = np.atleast_2d(np.asarray(self.t_set, dtype=np.float64))
        self.t_reset = np.atleast_2d(np.asarray(self.t_reset, dtype=np.float64))
        if self.groups is None:
            self.groups = np.arange(self.t_set.shape[0])
        self.groups = np.asarray(self.groups, dtype=np.int64)
        if self.t_set.shape != self.t_reset.shape or self.t_set.shape != (len(self.groups), len(self.stress)):
            raise ValueError("series arrays have inconsistent shapes")
        if np.any(np.diff(self.stress) <= 0):
            raise ValueError("stress counts must be strictly increasing")

    def __len__(self):
        return self.t_set.size

    def channel(self, channel):
        return self.t_set if channel_index(channel) == SET else self.t_reset

    def at(self, stress):
        """Sub-series holding only the given stress level."""
        hit = np.flatnonzero(self.stress == stress)
        if hit.size == 0:
            raise KeyError(f"no records at stress {stress}")
        k = hit[0]
        return MeasurementSeries(self.stress[k:k + 1], self.t_set[:, k:k + 1], self.t_reset[:, k:k + 1], self.groups)

    def records(self):
        for gi, g in enumerate(self.groups):
            for li, s in enumerate(self.stress):
                yield int(g), int(s), float(self.t_set[gi, li]), float(self.t_reset[gi, li])

    def to_csv(self, sink):
        _write_csv(sink, SERIES_HEADER, self.records())

    @classmethod
    def from_csv(cls, source):
        rows = _read_csv(source, SERIES_HEADER)
        if not rows:
            raise ValueError("measurement CSV has no records")
        groups = sorted({int(r[0]) for r in rows})
        stress = sorted({int(r[1]) for r in rows})
        gi = {g: i for i, g in enumerate(groups)}
        si = {s: i for i, s in enumerate(stress)}
        t_set = np.full((len(groups), len(stress)), np.nan)
        t_reset = np.full_like(t_set, np.nan)
        for g, s, ts, tr in rows:
            t_set[gi[int(g)], si[int(s)]] = float(ts)
            t_reset[gi[int(g)], si[int(s)]] = float(tr)
        return cls(stress, t_set, t_reset, groups)


def _write_csv(sink, header, rows):
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", newline="") as fh:
            _write_csv(fh, header, rows)
        return
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _read_csv(source, header):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return _read_csv(fh, header)
    reader = csv.reader(source)
    first = next(reader, None)
    if first is None or [h.strip() for h in first] != header:
        raise ValueError(f"expected CSV header {','.join(header)}")
    return [row for row in reader if row]


def _runs(addresses):
    """Split sorted unique addresses into contiguous ``(start, length)`` runs."""
    a = np.asarray(addresses, dtype=np.int64)
    if a.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(a) != 1) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [a.size]])
    return [(int(a[s]), int(e - s)) for s, e in zip(starts, ends)]


def _require_fresh(device, addresses):
    a = np.asarray(addresses)
    used = (device.stress[a] > 0) | (device.partial[a] > 0)
    if np.any(used):
        first = int(a[np.argmax(used)])
        raise NotFreshError(f"{int(used.sum())} target addresses already stressed (first at {first:#x})")


def _live_mean(times, dead):
    live = times[~dead]
    return float(live.mean()) if live.size else float("nan")


def characterize(device, addresses, n_max, every=1, group_size=DEFAULT_N_REP, temperature=None):
    """Sweep fresh addresses through ``n_max`` stress pairs, timing every ``every``-th.

    Addresses are initialized to all-1 and then cycled with buffered writes.
    At each recorded level ``n`` (0, every, 2*every, ..., and ``n_max``) the
    pair is applied as timed single-address writes instead, so the record at
    ``n`` is the latency of the ``(n+1)``-th pair. Cells therefore end at
    ``n_max + 1`` pairs.

    Addresses are averaged in consecutive groups of ``group_size``.
    """
    addr = np.unique(np.asarray(addresses, dtype=np.int64))
    if addr.size == 0:
        raise ValueError("no addresses to characterize")
    if n_max < 0 or every <= 0:
        raise ValueError("n_max must be >= 0 and every > 0")
    if n_max > device.model.rated_endurance * 4:
        raise ValueError("n_max beyond any plausible endurance")
    if addr.min() < 0 or addr.max() >= device.cell_count:
        raise LayoutError("addresses outside device")
    _require_fresh(device, addr)

    runs = _runs(addr)
    for start, length in runs:
        device.fill(start, length, ERASED, temperature)

    levels = list(range(0, n_max + 1, every))
    if levels[-1] != n_max:
        levels.append(n_max)
    n_groups = -(-addr.size // group_size)
    t_set = np.empty((n_groups, len(levels)))
    t_reset = np.empty_like(t_set)
    done = 0
    for li, level in enumerate(levels):
        gap = level - done
        if gap > 0:
            device.cycle_runs(runs, gap, temperature)
        ts, dead_s = device.timed_writes(addr, 0x00, temperature)
        tr, dead_r = device.timed_writes(addr, ERASED, temperature)
        for g in range(n_groups):
            sl = slice(g * group_size, (g + 1) * group_size)
            t_set[g, li] = _live_mean(ts[sl], dead_s[sl])
            t_reset[g, li] = _live_mean(tr[sl], dead_r[sl])
        done = level + 1
    return MeasurementSeries(levels, t_set, t_reset)


@dataclass
class ImprintReport:
    popcount: int
    pairs: int
    pairs_applied: int  # summed over every stressed address
    simulated_seconds: float
    popcount_seconds: float  # N * popcount * T_pair
    formula_seconds: float  # N * B * T_pair, every bit charged


def imprint(device, layout, temperature=None, budget_cap=BUDGET_CAP):
    """Write ``layout.bits`` by stressing the 1-bit ranges ``layout.pairs`` times."""
    layout.check_fits(device)
    layout.check_budget(device.model.rated_endurance, budget_cap)
    _require_fresh(device, layout.addresses())
    t0 = device.clock.elapsed
    before = int(device.stress.sum())
    for start, length in layout.ranges():
        device.fill(start, length, ERASED, temperature)
    for bit, (start, length) in zip(layout.bits, layout.ranges()):
        if bit:
            device.cycle(start, length, layout.pairs, temperature)
    n_cmds = -(-layout.n_rep // BUFFER_SIZE)
    t_pair = 2 * T_BUFFERED * n_cmds
    return ImprintReport(
        popcount=layout.popcount,
        pairs=layout.pairs,
        pairs_applied=int(device.stress.sum()) - before,
        simulated_seconds=device.clock.elapsed - t0,
        popcount_seconds=layout.pairs * layout.popcount * t_pair,
        formula_seconds=layout.pairs * layout.n_bits * t_pair,
    )


@dataclass
class Extraction:
    """Per-bit averaged latencies read back from a layout."""

    t_set: np.ndarray
    t_reset: np.ndarray
    failed: np.ndarray
    stress: np.ndarray  # mean stress per range before reading
    set_seconds: float
    reset_seconds: float
    temperature: float
    per_address_set: np.ndarray = field(default=None, repr=False)
    per_address_reset: np.ndarray = field(default=None, repr=False)

    def channel(self, channel):
        return self.t_set if channel_index(channel) == SET else self.t_reset

    def to_csv(self, sink):
        """Measurement CSV with one row per bit (``group`` is the bit index)."""
        rows = (
            (i, int(round(float(s))), float(a), float(b))
            for i, (s, a, b) in enumerate(zip(self.stress, self.t_set, self.t_reset))
        )
        _write_csv(sink, SERIES_HEADER, rows)

    def to_series(self, stress=None):
        """One-level series (one group per bit) for calibration or CSV export."""
        level = int(round(float(np.mean(self.stress)))) if stress is None else stress
        return MeasurementSeries([level], self.t_set[:, None], self.t_reset[:, None])


def extract(device, layout, temperature=None):
    """Time one set and one reset on every layout address and average per bit.

    Consumes exactly one stress pair per address. Failed cells are left out of
    the averages; a bit with more than half its cells failed raises
    :class:`UnreadableBitError`.
    """
    layout.check_fits(device)
    temp = device.temperature if temperature is None else temperature
    n = layout.n_bits
    t_set = np.empty(n)
    t_reset = np.empty(n)
    failed = np.zeros(n, np.int64)
    stress = np.empty(n)
    per_set = np.empty((n, layout.n_rep))
    per_reset = np.empty((n, layout.n_rep))
    set_total = reset_total = 0.0
    for i, (start, length) in enumerate(layout.ranges()):
        addr = np.arange(start, start + length)
        stress[i] = device.stress[addr].mean()
        live = device.stress[addr] < device.endurance_limit[addr]
        if np.any(device.data[addr][live] != ERASED):
            device.fill(start, length, ERASED, temp)
        ts, dead_s = device.timed_writes(addr, 0x00, temp)
        tr, dead_r = device.timed_writes(addr, ERASED, temp)
        dead = dead_s | dead_r
        failed[i] = int(dead.sum())
        if failed[i] * 2 > length:
            raise UnreadableBitError(i, failed[i], length)
        set_total += float(ts.sum())
        reset_total += float(tr.sum())
        t_set[i] = float(ts[~dead].mean())
        t_reset[i] = float(tr[~dead].mean())
        per_set[i] = ts
        per_reset[i] = tr
    return Extraction(t_set, t_reset, failed, stress, set_total, reset_total, temp, per_set, per_reset)


@dataclass(frozen=True)
class Threshold:
    """Decision level between fresh and stressed averages.

    ``temperature`` is the operating temperature of the calibration data;
    :meth:`at_temperature` rescales the level for reads taken elsewhere.
    """

    value: float
    channel: str
    margin: float
    temperature: float = 25.0
    temp_coeff: float = 0.0

    def at_temperature(self, temperature):
        if temperature == self.temperature:
            return self
        scale = (1 + self.temp_coeff * (temperature - 25.0)) / (1 + self.temp_coeff * (self.temperature - 25.0))
        return Threshold(self.value * scale, self.channel, self.margin * scale, temperature, self.temp_coeff)

    def to_text(self):
        return (
            f"channel={self.channel}\nvalue_s={self.value!r}\nmargin_s={self.margin!r}\n"
            f"temperature_c={self.temperature!r}\ntemp_coeff={self.temp_coeff!r}\n"
        )

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"malformed threshold line {line!r}")
            kv[key.strip()] = value.strip()
        try:
            return cls(
                value=float(kv["value_s"]),
                channel=kv["channel"],
                margin=float(kv["margin_s"]),
                temperature=float(kv.get("temperature_c", 25.0)),
                temp_coeff=float(kv.get("temp_coeff", 0.0)),
            )
        except KeyError as exc:
            raise ValueError(f"threshold file missing {exc.args[0]}") from None

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


def calibrate_threshold(fresh, stressed, channel="set", temperature=25.0, temp_coeff=0.0):
    """Midpoint between the slowest fresh and fastest stressed average.

    Raises :class:`NonSeparableError` when the classes overlap.
    """
    ch = channel_index(channel)
    name = "set" if ch == SET else "reset"
    f = fresh.channel(ch)
    s = stressed.channel(ch)
    f_g = np.nanmax(f, axis=1) if f.size else f
    s_g = np.nanmin(s, axis=1) if s.size else s
    if f_g.size == 0 or s_g.size == 0:
        raise ValueError("calibration needs non-empty fresh and stressed series")
    hi, lo = float(np.nanmax(f_g)), float(np.nanmin(s_g))
    if not hi < lo:
        bad = [
            (int(fresh.groups[i]), int(stressed.groups[j]))
            for i in range(len(f_g))
            for j in range(len(s_g))
            if f_g[i] >= s_g[j]
        ]
        raise NonSeparableError(
            f"{name} channel not separable: fresh max {hi:.6g}s >= stressed min {lo:.6g}s "
            f"({len(bad)} overlapping group pairs)",
            bad,
        )
    return Threshold((hi + lo) / 2, name, (lo - hi) / 2, temperature, temp_coeff)


def decode(measurements, threshold):
    """1 where the average exceeds the threshold, else 0 (ties read as fresh)."""
    if isinstance(measurements, Extraction):
        measurements = measurements.channel(threshold.channel)
    values = np.asarray(measurements, dtype=np.float64)
    return (values > threshold.value).astype(np.uint8)


def calibrate_reference(
    model,
    channel="set",
    pairs=DEFAULT_PAIRS,
    groups=32,
    n_rep=DEFAULT_N_REP,
    seed=0,
    temperature=25.0,
):
    """Threshold from a sacrificial reference chip of the same part number.

    ``groups`` ranges are stressed to ``pairs`` and ``groups`` stay fresh,
    interleaved, then all are read back and :func:`calibrate_threshold` is
    applied to the two classes.
    """
    bits = np.tile([1, 0], groups).astype(np.uint8)
    device = Device.new(2 * groups * n_rep, seed=seed, model=model)
    layout = WatermarkLayout.contiguous(bits, n_rep=n_rep, pairs=pairs)
    imprint(device, layout, temperature)
    ex = extract(device, layout, temperature)
    series = ex.to_series(0)
    ones = bits == 1
    fresh = MeasurementSeries([0], series.t_set[~ones], series.t_reset[~ones], np.flatnonzero(~ones))
    stressed = MeasurementSeries([pairs], series.t_set[ones], series.t_reset[ones], np.flatnonzero(ones))
    return calibrate_threshold(fresh, stressed, channel, temperature, model.temp_coeff)


def read_bit_measurements(source):
    """Per-bit ``(t_set, t_reset, stress)`` arrays from an extraction CSV."""
    rows = _read_csv(source, SERIES_HEADER)
    if not rows:
        raise ValueError("measurement CSV has no records")
    rows.sort(key=lambda r: int(r[0]))
    if [int(r[0]) for r in rows] != list(range(len(rows))):
        raise ValueError("extraction CSV must hold one row per bit, indexed 0..B-1")
    t_set = np.array([float(r[2]) for r in rows])
    t_reset = np.array([float(r[3]) for r in rows])
    stress = np.array([int(r[1]) for r in rows])
    return t_set, t_reset, stress


def series_csv_text(series):
    buf = io.StringIO()
    series.to_csv(buf)
    return buf.getvalue()
