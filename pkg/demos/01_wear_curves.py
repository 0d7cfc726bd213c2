"""
Wear curves
===========

Stress a few thousand addresses and watch the average set/reset latency
creep upward. Noise is turned off so the curve is the model itself.
"""

import numpy as np

from rrwm import DEFAULT_MODEL, Device, characterize
from rrwm.analysis import crossing_stress, sweep_rows

quiet = DEFAULT_MODEL.with_overrides(meas_noise=0.0)
dev = Device.new(1 << 16, seed=1, model=quiet)

# 2048 random addresses, one group per address
addr = np.random.default_rng(1).choice(dev.cell_count, 2048, replace=False)
series = characterize(dev, addr, 20_000, every=2000, group_size=1)

print("stress   set_min  set_mean  set_max   (us)")
for row in sweep_rows(series):
    n, lo, mean, hi = row[:4]
    print(f"{n:6d}  {lo * 1e6:7.1f}  {mean * 1e6:8.1f}  {hi * 1e6:7.1f}")

# where the slowest fresh cell is first beaten by every stressed one
print("set crossing:", crossing_stress(series, "set"))
print("reset crossing:", crossing_stress(series, "reset"))
