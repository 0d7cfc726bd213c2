"""Separability metrics, throughput/cost estimates, bake robustness and sweep reports."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .cell import RATED_PAIRS, RATED_TEMP_RANGE
from .device import T_BUFFERED
from .errors import TemperatureRangeError
from .watermark import Extraction, _write_csv, channel_index, decode, extract

SWEEP_HEADER = ["stress", "set_min", "set_mean", "set_max", "reset_min", "reset_mean", "reset_max"]
SEPARATION_HEADER = ["i", "j", "d_seconds"]

# Default operating point.
T_PAIR = 2 * T_BUFFERED
T_SWITCH = 250e-6
B_WMARK = 32
N_REP = 256
N_STRESS = 10_000


@dataclass
class SeparationReport:
    """All pairwise distances ``t(one_j) - t(zero_i)`` for one channel.

    ``pairs`` has shape ``(#zero bits, #one bits)``; rows follow ``zero_bits``
    and columns ``one_bits`` (bit indices into the watermark).
    """

    pairs: np.ndarray
    zero_bits: np.ndarray
    one_bits: np.ndarray
    channel: str
    stress_count: int | None = None
    decoded: np.ndarray | None = field(default=None, repr=False)
    extraction: Extraction | None = field(default=None, repr=False)

    @property
    def degenerate(self):
        return self.pairs.size == 0

    @property
    def min_d(self):
        return float(self.pairs.min()) if self.pairs.size else float("nan")

    @property
    def separable(self):
        return not self.degenerate and self.min_d > 0

    def rows(self):
        for a, i in enumerate(self.zero_bits):
            for b, j in enumerate(self.one_bits):
                yield int(i), int(j), float(self.pairs[a, b])

    def to_csv(self, sink):
        _write_csv(sink, SEPARATION_HEADER, self.rows())


def separation(measurements, bits, channel="set", stress_count=None):
    """Distances between every (logic-0, logic-1) pair of bit averages.

    ``measurements`` is an :class:`Extraction` or one average per bit.
    An all-0 or all-1 watermark gives an empty, degenerate report.
    """
    ch = channel_index(channel)
    name = "set" if ch == 0 else "reset"
    if isinstance(measurements, Extraction):
        values = measurements.channel(ch)
        if stress_count is None:
            stress_count = int(round(float(measurements.stress.max())))
    else:
        values = np.asarray(measurements, dtype=np.float64)
    bits = np.asarray(bits)
    if values.shape != bits.shape:
        raise ValueError("need one measurement per watermark bit")
    zeros = np.flatnonzero(bits == 0)
    ones = np.flatnonzero(bits == 1)
    d = values[ones][None, :] - values[zeros][:, None]
    return SeparationReport(d, zeros, ones, name, stress_count)


def imprint_time_estimate(n_pairs, b_wmark=B_WMARK, t_pair=T_PAIR):
    """``(seconds, bits per minute)`` to stress every watermark bit ``n_pairs`` times."""
    seconds = n_pairs * b_wmark * t_pair
    rate = b_wmark / seconds * 60 if seconds > 0 else float("inf")
    return seconds, rate


def retrieval_time_estimate(t_switch=T_SWITCH, b_wmark=B_WMARK, n_rep=N_REP):
    """``(seconds, bits per second)`` to time one write per watermark address."""
    seconds = t_switch * b_wmark * n_rep
    return seconds, b_wmark / seconds


def endurance_cost(n_pairs, rated_pairs=RATED_PAIRS):
    return n_pairs / rated_pairs


def estimates(n_pairs=N_STRESS, b_wmark=B_WMARK, t_pair=T_PAIR, t_switch=T_SWITCH, n_rep=N_REP, rated_pairs=RATED_PAIRS):
    imprint_s, imprint_rate = imprint_time_estimate(n_pairs, b_wmark, t_pair)
    retrieve_s, retrieve_rate = retrieval_time_estimate(t_switch, b_wmark, n_rep)
    return {
        "imprint_time_s": imprint_s,
        "imprint_rate_bits_per_min": imprint_rate,
        "retrieval_time_s": retrieve_s,
        "retrieval_rate_bits_per_s": retrieve_rate,
        "endurance_cost_fraction": endurance_cost(n_pairs, rated_pairs),
    }


def _fmt(v):
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def format_estimates(values):
    lines = [f"{k}={_fmt(v)}" for k, v in values.items()]
    lines.append(f"endurance_cost_percent={_fmt(values['endurance_cost_fraction'] * 100)}")
    return "\n".join(lines) + "\n"


def check_temperature(temperature):
    lo, hi = RATED_TEMP_RANGE
    if not lo <= temperature <= hi:
        raise TemperatureRangeError(f"{temperature} C outside rated range [{lo}, {hi}] C")


def bake_and_verify(device, layout, threshold, bake_temp=80.0, verify_temp=80.0, bake_hours=3.0, drift=None):
    """Bake an imprinted device, then read it back at ``verify_temp``.

    Baking leaves the model state untouched; ``drift(device, bake_temp,
    bake_hours)`` may be passed to inject a permanent aging effect. The
    report covers ``threshold.channel`` and carries the decoded bits (with
    the threshold shifted to ``verify_temp``).
    """
    check_temperature(verify_temp)
    if drift is not None:
        drift(device, bake_temp, bake_hours)
    ex = extract(device, layout, verify_temp)
    report = separation(ex, layout.bits, threshold.channel)
    report.decoded = decode(ex, threshold.at_temperature(verify_temp))
    report.extraction = ex
    return report


def sweep_rows(series):
    """Per stress level min/mean/max across groups, both channels (NaNs skipped)."""
    if series.t_set.size == 0:
        raise ValueError("empty measurement series")
    rows = []
    for k, s in enumerate(series.stress):
        col_s = series.t_set[:, k]
        col_r = series.t_reset[:, k]
        rows.append(
            (
                int(s),
                float(np.nanmin(col_s)), float(np.nanmean(col_s)), float(np.nanmax(col_s)),
                float(np.nanmin(col_r)), float(np.nanmean(col_r)), float(np.nanmax(col_r)),
            )
        )
    return rows


def stress_sweep_report(series, sink):
    rows = sweep_rows(series)
    _write_csv(sink, SWEEP_HEADER, rows)
    return rows


def crossing_stress(series, channel="set"):
    """First recorded stress whose fastest group beats the slowest fresh group.

    Returns ``None`` when no recorded level separates.
    """
    values = series.channel(channel)
    if series.stress[0] != 0:
        raise ValueError("series must start with a fresh (stress 0) record")
    fresh_max = np.nanmax(values[:, 0])
    for k in range(1, len(series.stress)):
        if np.nanmin(values[:, k]) > fresh_max:
            return int(series.stress[k])
    return None


def write_estimates(values, sink):
    text = format_estimates(values)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w") as fh:
            fh.write(text)
    else:
        sink.write(text)
