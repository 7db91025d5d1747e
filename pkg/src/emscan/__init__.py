"""Passive EM direction finder: scan control, RF simulation, heatmaps.

A steerable high-gain antenna is rastered over an az/el grid while a
frequency-hopping receiver integrates band power at every pixel; the
result is an angular heatmap of emissions that can be rendered on its own
or projected over a camera photo.  Everything runs against bit-exact
simulations (motion firmware and RF scene), so the full pipeline is
testable with no hardware attached.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .geometry import AngularPose
from .antenna import AntennaPattern, HelixDesign
from .rotor import RotorConfig, RotorState
from .sdr import CaptureBackend, CaptureRequest, IqCapture
from .scene import Emitter, ReceiveChain, Scene, Wall
from .scan import PixelRecord, ScanPlan, ScanResult
from .heatmap import Heatmap, OverlaySpec

__all__ = [
    "AngularPose",
    "AntennaPattern",
    "CaptureBackend",
    "CaptureRequest",
    "Emitter",
    "Heatmap",
    "HelixDesign",
    "IqCapture",
    "OverlaySpec",
    "PixelRecord",
    "ReceiveChain",
    "RotorConfig",
    "RotorState",
    "Scene",
    "ScanPlan",
    "ScanResult",
    "Wall",
    "__version__",
]
