"""Pointing geometry shared by the antenna, rotor, and scene models."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class AngularPose:
    """Antenna pointing direction in degrees.

    Azimuth is measured counterclockwise (viewed from above) from the +x
    axis in the horizontal plane; elevation is measured upward from the
    horizon.  Poses are plain values: no travel limits are enforced here.
    """

    az_deg: float
    el_deg: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.az_deg) and math.isfinite(self.el_deg)):
            raise ValueError("pose angles must be finite")


def unit_vector(pose: AngularPose) -> tuple[float, float, float]:
    """Unit direction vector for a pose (+x at az=0/el=0, +z up)."""
    az = math.radians(pose.az_deg)
    el = math.radians(pose.el_deg)
    return (
        math.cos(el) * math.cos(az),
        math.cos(el) * math.sin(az),
        math.sin(el),
    )


def pose_from_vector(x: float, y: float, z: float) -> AngularPose:
    """Pose pointing along (x, y, z).  Errors on the zero vector."""
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        raise ValueError("cannot derive a pose from the zero vector")
    el = math.degrees(math.asin(max(-1.0, min(1.0, z / r))))
    az = math.degrees(math.atan2(y, x))
    return AngularPose(az_deg=az, el_deg=el)


def angular_offset_deg(a: AngularPose, b: AngularPose) -> float:
    """Great-circle angle in degrees between two pointing directions."""
    va = unit_vector(a)
    vb = unit_vector(b)
    dot = va[0] * vb[0] + va[1] * vb[1] + va[2] * vb[2]
    return math.degrees(math.acos(max(-1.0, min(1.0, dot))))
