"""
Throughput and endurance cost
=============================
"""

from rrwm import Device, WatermarkLayout, imprint
from rrwm.analysis import estimates, format_estimates

print(format_estimates(estimates()))

# the BusyClock should agree with the all-bits formula
dev = Device.new(8192, seed=0)
imprint(dev, WatermarkLayout.contiguous("FFFFFFFF", pairs=10_000))
print("simulated all-ones imprint: %.2f s" % dev.clock.elapsed)

for n in (5_000, 10_000, 15_000, 20_000):
    e = estimates(n_pairs=n)
    print(f"N={n:6d}  {e['imprint_time_s'] / 60:6.1f} min  cost {e['endurance_cost_fraction']:.1%}")
