"""
How much stress is enough?
==========================

Smallest gap between any stressed bit and any fresh bit, over five chips.
A negative gap means some fresh bit reads slower than some stressed one.
"""

from rrwm import Device, WatermarkLayout, extract, imprint, separation

word = "C2F740EB"

for channel in ("set", "reset"):
    print(channel)
    for n in (2_500, 5_000, 7_500, 10_000, 12_500, 15_000, 20_000):
        gaps = []
        for seed in range(5):
            dev = Device.new(8192, seed=seed)
            lay = WatermarkLayout.contiguous(word, pairs=n)
            imprint(dev, lay)
            gaps.append(separation(extract(dev, lay), lay.bits, channel).min_d * 1e6)
        print(f"  N={n:6d}  min_d " + " ".join(f"{g:7.2f}" for g in gaps) + "  us")
