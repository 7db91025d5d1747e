"""Backend-neutral IQ capture contract and capture power estimation.

A backend takes a CaptureRequest (center frequency, bandwidth, duration)
and returns complex baseband samples in full-scale units (|sample| <= 1).
Power is tracked in dBFS inside a capture and converted to absolute dBm
with a per-backend calibration offset:

    dBm = dBFS + calibration_offset_db

The simulated backend runs at a fixed 2 MS/s complex rate; hardware
backends may substitute their own rate, which is recorded per capture.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .geometry import AngularPose

SIM_SAMPLE_RATE_HZ = 2_000_000.0
MAX_BANDWIDTH_HZ = 20e6

# Mean-square floor so an all-zero capture reports -300 dBFS, not -inf.
_POWER_FLOOR = 1e-30


class CaptureError(RuntimeError):
    """A backend failed to produce samples for a request."""


@dataclass(frozen=True)
class CaptureRequest:
    center_frequency_hz: float
    bandwidth_hz: float
    duration_s: float
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.center_frequency_hz <= 0:
            raise ValueError("center frequency must be positive")
        if not 0 < self.bandwidth_hz <= MAX_BANDWIDTH_HZ:
            raise ValueError(
                f"bandwidth must be in (0, {MAX_BANDWIDTH_HZ:g}] Hz, "
                f"got {self.bandwidth_hz:g}"
            )
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if self.center_frequency_hz - self.bandwidth_hz / 2 <= 0:
            raise ValueError("band extends to or below 0 Hz")

    def band_hz(self) -> tuple[float, float]:
        half = self.bandwidth_hz / 2
        return (self.center_frequency_hz - half, self.center_frequency_hz + half)


@dataclass(frozen=True)
class IqCapture:
    samples: np.ndarray
    sample_rate_hz: float
    center_frequency_hz: float
    clipped: bool = False

    def __post_init__(self) -> None:
        if self.samples.ndim != 1:
            raise ValueError("samples must be a 1-D array")
        if self.samples.dtype != np.complex64:
            raise ValueError(f"samples must be complex64, got {self.samples.dtype}")


class CaptureBackend:
    """Capture source interface.

    ``calibration_offset_db`` converts this backend's dBFS readings to dBm.
    ``notify_pose`` is a hook for backends whose output depends on where
    the antenna points; the default ignores it so hardware radios need not
    care.
    """

    calibration_offset_db: float = 0.0

    def capture(self, request: CaptureRequest) -> IqCapture:
        raise NotImplementedError

    def notify_pose(self, pose: AngularPose) -> None:
        return None


def capture_power(capture: IqCapture) -> float:
    """Mean-square power of a capture in dBFS (0 dBFS = full scale)."""
    x = capture.samples
    if x.size == 0:
        raise ValueError("cannot estimate power of an empty capture")
    re = x.real.astype(np.float64)
    im = x.imag.astype(np.float64)
    mean_sq = float(np.mean(re * re + im * im))
    return 10.0 * math.log10(max(mean_sq, _POWER_FLOOR))


def dbfs_to_dbm(power_dbfs: float, calibration_offset_db: float) -> float:
    """Absolute power in dBm given a backend calibration offset."""
    return power_dbfs + calibration_offset_db


# ---------------------------------------------------------------------------
# Capture files: raw interleaved complex64 plus a JSON sidecar
# ---------------------------------------------------------------------------


def dump_capture(capture: IqCapture, path: str) -> None:
    """Write samples as little-endian interleaved float32 IQ plus ``.json``."""
    data = capture.samples.astype("<c8", copy=False)
    with open(path, "wb") as fh:
        fh.write(data.tobytes())
    meta = {
        "format": "complex64-le",
        "sample_rate_hz": capture.sample_rate_hz,
        "center_frequency_hz": capture.center_frequency_hz,
        "samples": int(capture.samples.size),
        "clipped": capture.clipped,
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_capture(path: str) -> IqCapture:
    """Read a capture written by :func:`dump_capture`."""
    with open(path + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format") != "complex64-le":
        raise ValueError(f"{path}: unsupported capture format {meta.get('format')!r}")
    expected = int(meta["samples"])
    size = os.path.getsize(path)
    if size != expected * 8:
        raise ValueError(
            f"{path}: size {size} does not match {expected} complex64 samples"
        )
    data = np.fromfile(path, dtype="<c8", count=expected).astype(np.complex64)
    return IqCapture(
        samples=data,
        sample_rate_hz=float(meta["sample_rate_hz"]),
        center_frequency_hz=float(meta["center_frequency_hz"]),
        clipped=bool(meta.get("clipped", False)),
    )
