"""
Bake at 80 C
============
"""

from rrwm import Device, WatermarkLayout, bake_and_verify, calibrate_reference, extract, imprint, separation
from rrwm.watermark import bits_to_hex

dev = Device.new(8192, seed=3)
layout = WatermarkLayout.contiguous("C2F740EB", pairs=15_000)
imprint(dev, layout)

for channel in ("set", "reset"):
    th = calibrate_reference(dev.model, channel, 15_000, seed=7)
    # read a copy at room temperature so both reads see the same cells
    twin = Device.from_image(dev.to_image())
    cold = separation(extract(twin, layout, 25.0), layout.bits, channel)
    hot = bake_and_verify(Device.from_image(dev.to_image()), layout, th)
    print(f"{channel}: 25C min_d {cold.min_d * 1e6:.2f} us, 80C min_d {hot.min_d * 1e6:.2f} us, "
          f"decoded {bits_to_hex(hot.decoded)}")
