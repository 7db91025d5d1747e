"""Static RF scene: emitters, attenuating walls, and the receive chain.

Expected received power at a pose is a link budget evaluated per emitter
and summed in linear watts together with the thermal noise floor:

    P_rx = EIRP + 10*log10(band_overlap) + G(offset) - FSPL - walls
    noise = -174 dBm/Hz + 10*log10(B) + NF          (kT at 290 K)

with the LNA gain applied to the sum.  Free-space path loss uses the
capture center frequency.  The scene also synthesizes Gaussian IQ captures
whose mean power matches the link budget, which is what the simulated
capture backend returns.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .antenna import AntennaPattern, angular_offset, pattern_gain, tabulated_pattern
from .geometry import AngularPose, pose_from_vector
from .sdr import (
    SIM_SAMPLE_RATE_HZ,
    CaptureBackend,
    CaptureRequest,
    IqCapture,
)

SPEED_OF_LIGHT_M_S = 299792458.0
THERMAL_NOISE_DBM_HZ = -174.0  # kT for T = 290 K
REFERENCE_TEMPERATURE_K = 290.0


class SceneFormatError(ValueError):
    """Scene description rejected; message carries the offending path."""


class ClippingWarning(UserWarning):
    """Synthesized signal exceeded full scale and was pinned to 0 dBFS."""


@dataclass(frozen=True)
class Emitter:
    """Point source with an EIRP spread uniformly over its emission band."""

    label: str
    position_m: tuple[float, float, float]
    eirp_dbm: float
    band_hz: tuple[float, float]

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("emitter label must be non-empty")
        lo, hi = self.band_hz
        if not 0 < lo < hi:
            raise ValueError(f"emitter {self.label}: band must satisfy 0 < lo < hi")
        if self.distance_m() == 0.0:
            raise ValueError(f"emitter {self.label}: cannot sit at the receiver")

    def distance_m(self) -> float:
        x, y, z = self.position_m
        return math.sqrt(x * x + y * y + z * z)

    def direction(self) -> AngularPose:
        return pose_from_vector(*self.position_m)


@dataclass(frozen=True)
class Wall:
    """Finite rectangular attenuator on a plane (point + unit normal).

    The rectangle extends ``half_extent_m[0]`` along an in-plane axis u and
    ``half_extent_m[1]`` along v, where u = normalize(cross(normal, z-hat))
    (x-hat when the normal is vertical) and v = cross(normal, u).  For the
    usual vertical wall, u is horizontal and v is vertical.
    """

    point_m: tuple[float, float, float]
    normal: tuple[float, float, float]
    half_extent_m: tuple[float, float]
    attenuation_db: float

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=np.float64)
        norm = float(np.linalg.norm(n))
        if norm < 1e-12:
            raise ValueError("wall normal must be non-zero")
        object.__setattr__(self, "normal", tuple(float(c) for c in n / norm))
        if self.half_extent_m[0] <= 0 or self.half_extent_m[1] <= 0:
            raise ValueError("wall half-extents must be positive")
        if self.attenuation_db < 0:
            raise ValueError("wall attenuation cannot be negative")

    def _basis(self) -> tuple[np.ndarray, np.ndarray]:
        n = np.asarray(self.normal, dtype=np.float64)
        up = np.array([0.0, 0.0, 1.0])
        u = np.cross(n, up)
        if np.linalg.norm(u) < 1e-12:
            u = np.array([1.0, 0.0, 0.0])
        else:
            u = u / np.linalg.norm(u)
        return u, np.cross(n, u)

    def crosses(self, target_m: tuple[float, float, float]) -> bool:
        """True when the receiver-to-target segment passes the rectangle."""
        n = np.asarray(self.normal, dtype=np.float64)
        p = np.asarray(self.point_m, dtype=np.float64)
        d = np.asarray(target_m, dtype=np.float64)  # segment from the origin
        denom = float(np.dot(d, n))
        if abs(denom) < 1e-15:
            return False  # parallel to the plane
        t = float(np.dot(p, n)) / denom
        if not 0.0 < t < 1.0:
            return False
        hit = t * d - p
        u, v = self._basis()
        return (
            abs(float(np.dot(hit, u))) <= self.half_extent_m[0]
            and abs(float(np.dot(hit, v))) <= self.half_extent_m[1]
        )


@dataclass(frozen=True)
class ReceiveChain:
    """Antenna pattern plus front-end gain, noise figure, and calibration."""

    pattern: AntennaPattern
    lna_gain_db: float = 38.0
    noise_figure_db: float = 1.2
    calibration_offset_db: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_figure_db < 0:
            raise ValueError("noise figure cannot be negative")


@dataclass(frozen=True)
class Scene:
    chain: ReceiveChain
    emitters: tuple[Emitter, ...] = ()
    walls: tuple[Wall, ...] = ()
    temperature_k: float = REFERENCE_TEMPERATURE_K
    description: str = ""

    def __post_init__(self) -> None:
        if self.temperature_k <= 0:
            raise ValueError("temperature must be positive")
        labels = [e.label for e in self.emitters]
        if len(set(labels)) != len(labels):
            raise ValueError("emitter labels must be unique")


# ---------------------------------------------------------------------------
# Link budget
# ---------------------------------------------------------------------------


def fspl_db(distance_m: float, frequency_hz: float) -> float:
    """Free-space path loss, 20*log10(4 pi d f / c)."""
    if distance_m <= 0 or frequency_hz <= 0:
        raise ValueError("distance and frequency must be positive")
    return 20.0 * math.log10(
        4.0 * math.pi * distance_m * frequency_hz / SPEED_OF_LIGHT_M_S
    )


def band_overlap(
    emitter_band_hz: tuple[float, float], capture_band_hz: tuple[float, float]
) -> float:
    """Fraction of the emitter band falling inside the capture band, in [0, 1]."""
    e_lo, e_hi = emitter_band_hz
    c_lo, c_hi = capture_band_hz
    if not e_lo < e_hi:
        raise ValueError("emitter band must satisfy lo < hi")
    if not c_lo < c_hi:
        raise ValueError("capture band must satisfy lo < hi")
    overlap = min(e_hi, c_hi) - max(e_lo, c_lo)
    return max(0.0, overlap) / (e_hi - e_lo)


def noise_floor_dbm(scene: Scene, bandwidth_hz: float) -> float:
    """Thermal noise floor at the chain output (after NF and LNA) in dBm."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    kt = THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(
        scene.temperature_k / REFERENCE_TEMPERATURE_K
    )
    return (
        kt
        + 10.0 * math.log10(bandwidth_hz)
        + scene.chain.noise_figure_db
        + scene.chain.lna_gain_db
    )


def wall_loss_db(scene: Scene, target_m: tuple[float, float, float]) -> float:
    """Total attenuation of every wall crossed on the way to ``target_m``."""
    return sum(w.attenuation_db for w in scene.walls if w.crosses(target_m))


def received_power_dbm(
    scene: Scene, pose: AngularPose, capture_band_hz: tuple[float, float]
) -> float:
    """Expected capture power in dBm with the antenna at ``pose``.

    Per-emitter contributions and the thermal floor are summed in linear
    milliwatts; emitters with no spectral overlap contribute nothing.
    """
    lo, hi = capture_band_hz
    if not 0 < lo < hi:
        raise ValueError("capture band must satisfy 0 < lo < hi")
    center = (lo + hi) / 2.0
    chain = scene.chain
    noise_in = (
        THERMAL_NOISE_DBM_HZ
        + 10.0 * math.log10(scene.temperature_k / REFERENCE_TEMPERATURE_K)
        + 10.0 * math.log10(hi - lo)
        + chain.noise_figure_db
    )
    total_mw = 10.0 ** (noise_in / 10.0)
    for emitter in scene.emitters:
        overlap = band_overlap(emitter.band_hz, capture_band_hz)
        if overlap == 0.0:
            continue
        offset = angular_offset(pose, emitter.direction())
        gain = pattern_gain(chain.pattern, offset)
        level = (
            emitter.eirp_dbm
            + 10.0 * math.log10(overlap)
            + gain
            - fspl_db(emitter.distance_m(), center)
            - wall_loss_db(scene, emitter.position_m)
        )
        total_mw += 10.0 ** (level / 10.0)
    return 10.0 * math.log10(total_mw) + chain.lna_gain_db


# ---------------------------------------------------------------------------
# IQ synthesis
# ---------------------------------------------------------------------------


def synthesize_iq(
    scene: Scene, pose: AngularPose, request: CaptureRequest
) -> IqCapture:
    """Complex circular Gaussian samples whose mean power matches the budget.

    The target level in dBFS is the link-budget dBm minus the chain's
    calibration offset.  A target above full scale is pinned to 0 dBFS with
    a ClippingWarning and the capture is flagged; individual samples are
    always kept strictly inside the unit circle.
    """
    level_dbm = received_power_dbm(scene, pose, request.band_hz())
    target_dbfs = level_dbm - scene.chain.calibration_offset_db
    clipped = False
    if target_dbfs > 0.0:
        warnings.warn(
            f"target level {target_dbfs:.2f} dBFS exceeds full scale; clipping",
            ClippingWarning,
            stacklevel=2,
        )
        target_dbfs = 0.0
        clipped = True
    count = round(request.duration_s * SIM_SAMPLE_RATE_HZ)
    if count < 1:
        raise ValueError(
            f"duration {request.duration_s:g} s is shorter than one sample at "
            f"{SIM_SAMPLE_RATE_HZ:g} S/s"
        )
    rng = np.random.default_rng(request.seed)
    sigma = math.sqrt(10.0 ** (target_dbfs / 10.0) / 2.0)
    samples = sigma * (
        rng.standard_normal(count) + 1j * rng.standard_normal(count)
    )
    mag = np.abs(samples)
    over = mag > 1.0
    if np.any(over):
        samples[over] *= (1.0 - 1e-6) / mag[over]
    return IqCapture(
        samples=samples.astype(np.complex64),
        sample_rate_hz=SIM_SAMPLE_RATE_HZ,
        center_frequency_hz=request.center_frequency_hz,
        clipped=clipped,
    )


class SimCaptureBackend(CaptureBackend):
    """Capture backend that synthesizes IQ from a scene at the current pose."""

    def __init__(self, scene: Scene, pose: AngularPose | None = None):
        self.scene = scene
        self.pose = pose if pose is not None else AngularPose(0.0, 0.0)
        self.calibration_offset_db = scene.chain.calibration_offset_db

    def notify_pose(self, pose: AngularPose) -> None:
        self.pose = pose

    def capture(self, request: CaptureRequest) -> IqCapture:
        return synthesize_iq(self.scene, self.pose, request)


# ---------------------------------------------------------------------------
# JSON scene descriptions
# ---------------------------------------------------------------------------

_GAUSSIAN_PATTERN_KEYS = {
    "model",
    "boresight_gain_dbi",
    "hpbw_deg",
    "sidelobe_floor_db",
}
_CHAIN_KEYS = {"pattern", "lna_gain_db", "noise_figure_db", "calibration_offset_db"}
_EMITTER_KEYS = {"label", "position_m", "eirp_dbm", "band_hz"}
_WALL_KEYS = {"point_m", "normal", "half_extent_m", "attenuation_db"}
_SCENE_KEYS = {"description", "temperature_k", "chain", "emitters", "walls"}


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise SceneFormatError(f"unknown key at {where}.{key}")
    for key in required:
        if key not in obj:
            raise SceneFormatError(f"missing key {key!r} at {where}")


def _vec3(value: object, where: str) -> tuple[float, float, float]:
    if not isinstance(value, list) or len(value) != 3:
        raise SceneFormatError(f"{where} must be a 3-element array")
    return (float(value[0]), float(value[1]), float(value[2]))


def _pair(value: object, where: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise SceneFormatError(f"{where} must be a 2-element array")
    return (float(value[0]), float(value[1]))


def _parse_pattern(obj: object, where: str) -> AntennaPattern:
    if not isinstance(obj, dict):
        raise SceneFormatError(f"{where} must be an object")
    model = obj.get("model", "gaussian_beam")
    if model == "tabulated":
        _require_keys(obj, {"model", "table"}, {"table"}, where)
        rows = obj["table"]
        if not isinstance(rows, list) or not rows:
            raise SceneFormatError(f"{where}.table must be a non-empty array")
        return tabulated_pattern([_pair(r, f"{where}.table") for r in rows])
    _require_keys(
        obj, _GAUSSIAN_PATTERN_KEYS, {"boresight_gain_dbi", "hpbw_deg"}, where
    )
    try:
        return AntennaPattern(
            boresight_gain_dbi=float(obj["boresight_gain_dbi"]),
            hpbw_deg=float(obj["hpbw_deg"]),
            model=str(model),
            sidelobe_floor_db=float(obj.get("sidelobe_floor_db", -20.0)),
        )
    except ValueError as exc:
        raise SceneFormatError(f"{where}: {exc}") from exc


def parse_scene(obj: object, source: str = "<scene>") -> Scene:
    """Build a Scene from parsed JSON.  Unknown keys are rejected."""
    if not isinstance(obj, dict):
        raise SceneFormatError(f"{source}: top level must be an object")
    _require_keys(obj, _SCENE_KEYS, {"chain"}, source)
    chain_obj = obj["chain"]
    if not isinstance(chain_obj, dict):
        raise SceneFormatError(f"{source}.chain must be an object")
    _require_keys(chain_obj, _CHAIN_KEYS, {"pattern"}, f"{source}.chain")
    chain = ReceiveChain(
        pattern=_parse_pattern(chain_obj["pattern"], f"{source}.chain.pattern"),
        lna_gain_db=float(chain_obj.get("lna_gain_db", 38.0)),
        noise_figure_db=float(chain_obj.get("noise_figure_db", 1.2)),
        calibration_offset_db=float(chain_obj.get("calibration_offset_db", 0.0)),
    )
    emitters = []
    for i, e in enumerate(obj.get("emitters", [])):
        where = f"{source}.emitters[{i}]"
        if not isinstance(e, dict):
            raise SceneFormatError(f"{where} must be an object")
        _require_keys(e, _EMITTER_KEYS, _EMITTER_KEYS, where)
        try:
            emitters.append(
                Emitter(
                    label=str(e["label"]),
                    position_m=_vec3(e["position_m"], f"{where}.position_m"),
                    eirp_dbm=float(e["eirp_dbm"]),
                    band_hz=_pair(e["band_hz"], f"{where}.band_hz"),
                )
            )
        except ValueError as exc:
            raise SceneFormatError(f"{where}: {exc}") from exc
    walls = []
    for i, w in enumerate(obj.get("walls", [])):
        where = f"{source}.walls[{i}]"
        if not isinstance(w, dict):
            raise SceneFormatError(f"{where} must be an object")
        _require_keys(w, _WALL_KEYS, _WALL_KEYS, where)
        try:
            walls.append(
                Wall(
                    point_m=_vec3(w["point_m"], f"{where}.point_m"),
                    normal=_vec3(w["normal"], f"{where}.normal"),
                    half_extent_m=_pair(w["half_extent_m"], f"{where}.half_extent_m"),
                    attenuation_db=float(w["attenuation_db"]),
                )
            )
        except ValueError as exc:
            raise SceneFormatError(f"{where}: {exc}") from exc
    try:
        return Scene(
            chain=chain,
            emitters=tuple(emitters),
            walls=tuple(walls),
            temperature_k=float(obj.get("temperature_k", REFERENCE_TEMPERATURE_K)),
            description=str(obj.get("description", "")),
        )
    except ValueError as exc:
        raise SceneFormatError(f"{source}: {exc}") from exc


def load_scene(path: str) -> Scene:
    """Load a scene description from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneFormatError(f"{path}: invalid JSON: {exc}") from exc
    return parse_scene(obj, source=path)
