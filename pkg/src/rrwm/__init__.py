"""Behavioral ReRAM wear-out simulator and stress-based watermarking toolkit."""

from .analysis import (
    SeparationReport,
    bake_and_verify,
    crossing_stress,
    endurance_cost,
    estimates,
    imprint_time_estimate,
    retrieval_time_estimate,
    separation,
    stress_sweep_report,
)
from .cell import DEFAULT_MODEL, CellState, TimingModel, apply_stress_pair, reset_time, set_time
from .device import BusyClock, Device, DeviceImage, load_image, save_image
from .watermark import (
    Extraction,
    MeasurementSeries,
    Threshold,
    WatermarkLayout,
    calibrate_reference,
    calibrate_threshold,
    characterize,
    decode,
    extract,
    imprint,
    parse_watermark,
    read_layout,
    write_layout,
)

__version__ = "0.1.0"
