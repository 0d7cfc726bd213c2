"""
Imprint and retrieve a watermark
================================
"""

from rrwm import Device, WatermarkLayout, calibrate_reference, decode, extract, imprint
from rrwm.watermark import bits_to_hex

# thresholds come from a sacrificial chip of the same part number
threshold = calibrate_reference(Device.new(16).model, "set", 10_000, seed=100)
print(threshold.to_text())

dev = Device.new(8192, seed=42)
layout = WatermarkLayout.contiguous("C2F740EB", pairs=10_000)
report = imprint(dev, layout)
print("popcount:", report.popcount)
print("simulated imprint time: %.1f s" % report.simulated_seconds)

ex = extract(dev, layout)
print("retrieval time: %.3f s" % (ex.set_seconds + ex.reset_seconds))
print("decoded:", bits_to_hex(decode(ex, threshold)))

# per-bit averages, one line per bit
for i, (bit, t) in enumerate(zip(layout.bits, ex.t_set)):
    print(f"bit {i:2d}  {bit}  {t * 1e6:6.1f} us  {'#' * int((t - 180e-6) * 1e6 / 2)}")
