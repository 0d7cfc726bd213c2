"""Per-cell state and the stress-dependent set/reset latency model.

Latency of a cell that has seen ``n`` set-reset pairs::

    t(n) = t_fresh * (1 + a * (n / N_M) ** p) * variation * (1 + kappa * (T - 25)) * (1 + eps)

with ``eps ~ Normal(0, sigma_m)``. The growth amplitudes ``a`` for the set and
reset channels are solved from the stress count at which the slowest-possible
stressed cell overtakes the fastest-possible fresh one (see
:func:`crossing_amplitude`).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import CellFailureError

RATED_PAIRS = 500_000  # 1M rewrite cycles
DEFAULT_SPREAD = 0.10
REFERENCE_TEMP = 25.0
RATED_TEMP_RANGE = (-25.0, 85.0)

# Calibration anchors.
SET_CROSSING_PAIRS = 11_900
RESET_CROSSING_PAIRS = 14_900
SET_MEAN_ANCHOR = (10_000, 250e-6)  # population mean set time after 10K pairs
T_RESET_FRESH = 200e-6
TEMP_COEFF = 2.5e-4
MEAS_NOISE = 0.03
GROWTH_EXPONENT = 1.0

ENDURANCE_MEAN = 1_000_000
ENDURANCE_SIGMA = 100_000

SET, RESET = 0, 1


def crossing_amplitude(n_cross, spread=DEFAULT_SPREAD, rated=RATED_PAIRS, p=GROWTH_EXPONENT):
    """Growth amplitude at which a worst-case stressed cell ties a worst-case fresh one.

    Solves ``(1 - spread) * (1 + a * (n_cross / rated) ** p) == 1 + spread``.
    Any stress above ``n_cross`` then separates the two variation intervals.
    """
    return (2.0 * spread / (1.0 - spread)) / (n_cross / rated) ** p


_A_SET = crossing_amplitude(SET_CROSSING_PAIRS)
_A_RESET = crossing_amplitude(RESET_CROSSING_PAIRS)
_T_SET_FRESH = SET_MEAN_ANCHOR[1] / (1.0 + _A_SET * (SET_MEAN_ANCHOR[0] / RATED_PAIRS) ** GROWTH_EXPONENT)


@dataclass(frozen=True)
class TimingModel:
    """Parametric set/reset latency model shared by every cell of a part number.

    Times are in seconds, ``temp_coeff`` is a fraction per degree C, and
    ``rated_endurance`` counts set-reset pairs.
    """

    t_set_fresh: float = _T_SET_FRESH
    t_reset_fresh: float = T_RESET_FRESH
    set_growth: float = _A_SET
    reset_growth: float = _A_RESET
    growth_exponent: float = GROWTH_EXPONENT
    temp_coeff: float = TEMP_COEFF
    meas_noise: float = MEAS_NOISE
    cell_spread: float = DEFAULT_SPREAD
    rated_endurance: float = RATED_PAIRS

    def __post_init__(self):
        if self.t_set_fresh <= 0 or self.t_reset_fresh <= 0:
            raise ValueError("fresh latencies must be positive")
        if self.set_growth <= 0 or self.reset_growth <= 0 or self.growth_exponent <= 0:
            raise ValueError("growth amplitudes and exponent must be positive")
        if not 0 <= self.cell_spread < 1:
            raise ValueError("cell_spread must lie in [0, 1)")
        if self.meas_noise < 0:
            raise ValueError("meas_noise must be non-negative")
        if self.rated_endurance <= 0:
            raise ValueError("rated_endurance must be positive")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def calibrated(
        cls,
        set_crossing=SET_CROSSING_PAIRS,
        reset_crossing=RESET_CROSSING_PAIRS,
        set_mean_anchor=SET_MEAN_ANCHOR,
        **overrides,
    ):
        """Build a model whose growth amplitudes hit the given crossing points.

        ``overrides`` may change any other field; ``cell_spread``,
        ``rated_endurance`` and ``growth_exponent`` feed the solve.
        """
        spread = overrides.get("cell_spread", DEFAULT_SPREAD)
        rated = overrides.get("rated_endurance", RATED_PAIRS)
        p = overrides.get("growth_exponent", GROWTH_EXPONENT)
        a_s = crossing_amplitude(set_crossing, spread, rated, p)
        a_r = crossing_amplitude(reset_crossing, spread, rated, p)
        n_anchor, t_anchor = set_mean_anchor
        params = dict(
            t_set_fresh=t_anchor / (1.0 + a_s * (n_anchor / rated) ** p),
            set_growth=a_s,
            reset_growth=a_r,
        )
        params.update(overrides)
        return cls(**params)

    def with_overrides(self, **overrides):
        unknown = set(overrides) - set(self.field_names())
        if unknown:
            raise ValueError(f"unknown TimingModel fields: {sorted(unknown)}")
        values = {name: getattr(self, name) for name in self.field_names()}
        values.update({k: float(v) for k, v in overrides.items()})
        return TimingModel(**values)

    def growth(self, stress, channel):
        amp = self.set_growth if channel == SET else self.reset_growth
        n = np.asarray(stress, dtype=np.float64)
        return 1.0 + amp * (n / self.rated_endurance) ** self.growth_exponent

    def temperature_factor(self, temperature):
        return 1.0 + self.temp_coeff * (temperature - REFERENCE_TEMP)

    def latency(self, stress, variation, channel, temperature=REFERENCE_TEMP, noise=None):
        """Vectorized latency.

        ``noise`` holds standard-normal draws (same shape as ``stress``); they
        are scaled by ``meas_noise`` here. ``None`` means a noiseless read.
        """
        t0 = self.t_set_fresh if channel == SET else self.t_reset_fresh
        t = t0 * self.growth(stress, channel) * np.asarray(variation, dtype=np.float64)
        t = t * self.temperature_factor(temperature)
        if noise is not None and self.meas_noise > 0:
            t = t * (1.0 + self.meas_noise * np.asarray(noise, dtype=np.float64))
        return t

    def endurance_fraction(self, pairs):
        """Fraction of rated endurance consumed by ``pairs`` set-reset pairs."""
        return pairs / self.rated_endurance


DEFAULT_MODEL = TimingModel()


@dataclass
class CellState:
    stress_count: int = 0
    variation: float = 1.0
    failed: bool = False
    value: int = 1
    endurance_limit: int = ENDURANCE_MEAN
    address: int | None = None

    def __post_init__(self):
        if self.stress_count < 0:
            raise ValueError("stress_count must be non-negative")
        if self.endurance_limit <= 0:
            raise ValueError("endurance_limit must be positive")
        self.failed = self.stress_count >= self.endurance_limit


def _timed(cell, model, temperature, rng, channel):
    if cell.failed:
        raise CellFailureError(cell.address if cell.address is not None else -1, cell.stress_count)
    noise = rng.standard_normal() if (rng is not None and model.meas_noise > 0) else None
    return float(model.latency(cell.stress_count, cell.variation, channel, temperature, noise))


def set_time(cell, model=DEFAULT_MODEL, temperature=REFERENCE_TEMP, rng=None):
    """Observed set (HRS -> LRS) latency of ``cell`` in seconds.

    ``rng`` is a :class:`numpy.random.Generator`; with ``None`` the read is noiseless.
    """
    return _timed(cell, model, temperature, rng, SET)


def reset_time(cell, model=DEFAULT_MODEL, temperature=REFERENCE_TEMP, rng=None):
    """Observed reset (LRS -> HRS) latency of ``cell`` in seconds."""
    return _timed(cell, model, temperature, rng, RESET)


def apply_stress_pair(cell):
    """Apply one set-reset pair in place and return the cell.

    Stressing a failed cell changes nothing and raises :class:`CellFailureError`.
    """
    if cell.failed:
        raise CellFailureError(cell.address if cell.address is not None else -1, cell.stress_count)
    cell.stress_count += 1
    cell.value = 1
    if cell.stress_count >= cell.endurance_limit:
        cell.failed = True
    return cell


def sample_variations(rng, n, spread=DEFAULT_SPREAD, regional_fraction=0.8, region_size=256):
    """Draw per-cell variation factors in ``[1 - spread, 1 + spread]``.

    Variation is the sum of a component shared by every cell in an aligned
    block of ``region_size`` addresses (half-width ``regional_fraction * spread``)
    and an independent per-cell component carrying the rest of the spread.
    """
    if not 0 <= regional_fraction <= 1:
        raise ValueError("regional_fraction must lie in [0, 1]")
    h_region = regional_fraction * spread
    h_local = spread - h_region
    n_regions = -(-n // region_size)
    regional = rng.uniform(-h_region, h_region, n_regions)
    local = rng.uniform(-h_local, h_local, n)
    v = 1.0 + np.repeat(regional, region_size)[:n] + local
    return np.clip(v, 1.0 - spread, 1.0 + spread)


def sample_endurance_limits(rng, n, rated=RATED_PAIRS, mean=ENDURANCE_MEAN, sigma=ENDURANCE_SIGMA):
    """Per-cell failure points, Normal(mean, sigma) floored at the rated endurance."""
    limits = np.rint(rng.normal(mean, sigma, n))
    return np.maximum(limits, rated).astype(np.int64)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def keyed_normal(seed, *keys):
    """Standard-normal draws addressed by integer keys rather than stream position.

    Every combination of ``seed`` and ``keys`` maps to one fixed draw, so a
    device's measurement noise depends only on its seed and the cell's
    history. Keys broadcast against each other like numpy arrays.
    """
    arrays = np.broadcast_arrays(*[np.asarray(k, dtype=np.int64) for k in keys])
    with np.errstate(over="ignore"):
        h = np.full(arrays[0].shape, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
        for k in arrays:
            h = _splitmix64(h ^ k.astype(np.uint64))
        h1 = _splitmix64(h)
        h2 = _splitmix64(h1)
    # 53-bit uniforms in (0, 1]
    u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 1.0) / 9007199254740992.0
    u2 = (h2 >> np.uint64(11)).astype(np.float64) / 9007199254740992.0
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
