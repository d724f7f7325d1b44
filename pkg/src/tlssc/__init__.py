"""Traffic-light stop-and-go speed control: trajectory processing, FVDM calibration and replay."""

__version__ = "0.1.0"
