"""Axial-mode helix sizing and receive-pattern evaluation.

The closed forms here are the classic Kraus approximations for an
axial-mode helical antenna of ``n`` turns, circumference ``C`` and turn
spacing ``S`` (both in wavelengths):

    directivity      D    = 15 * C^2 * n * S
    half-power width HPBW = 52 / (C * sqrt(n * S))  [degrees]
    axial ratio      AR   = (2n + 1) / (2n)

They are trusted only in the axial-mode band (roughly 0.75 <= C <= 1.33,
n >= 3); designs outside it are accepted with a warning so that what-if
sweeps still run.

Beam shapes are either an idealized parabolic-in-dB main lobe with a
sidelobe floor, or a measured gain-vs-offset table interpolated in dB.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field

from .geometry import AngularPose, angular_offset_deg

# Axial-mode validity band for the Kraus closed forms.
AXIAL_MODE_C_MIN = 0.75
AXIAL_MODE_C_MAX = 1.33
AXIAL_MODE_MIN_TURNS = 3

GAUSSIAN_BEAM = "gaussian_beam"
TABULATED = "tabulated"


class AxialModeWarning(UserWarning):
    """Design parameters fall outside the axial-mode validity band."""


@dataclass(frozen=True)
class HelixDesign:
    """Electrical description of an axial-mode helix.

    ``metadata`` is free-form (wire gauge, former material, ...) and has
    no effect on any computed figure.
    """

    turns: int
    pitch_angle_deg: float
    circumference_wavelengths: float
    frequency_hz: float = 2.45e9
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.turns < 1:
            raise ValueError(f"turns must be >= 1, got {self.turns}")
        if not 0.0 < self.pitch_angle_deg < 90.0:
            raise ValueError(
                f"pitch angle must be in (0, 90) degrees, got {self.pitch_angle_deg}"
            )
        if self.circumference_wavelengths <= 0.0:
            raise ValueError("circumference must be positive")
        if self.frequency_hz <= 0.0:
            raise ValueError("frequency must be positive")
        if self.turns < AXIAL_MODE_MIN_TURNS:
            warnings.warn(
                f"{self.turns} turns is below the axial-mode minimum of "
                f"{AXIAL_MODE_MIN_TURNS}; Kraus figures are unreliable",
                AxialModeWarning,
                stacklevel=2,
            )
        if not AXIAL_MODE_C_MIN <= self.circumference_wavelengths <= AXIAL_MODE_C_MAX:
            warnings.warn(
                f"circumference {self.circumference_wavelengths} wavelengths is "
                f"outside the axial-mode band "
                f"[{AXIAL_MODE_C_MIN}, {AXIAL_MODE_C_MAX}]",
                AxialModeWarning,
                stacklevel=2,
            )


def spacing_from_pitch(design: HelixDesign) -> float:
    """Turn spacing in wavelengths: S = C * tan(pitch)."""
    return design.circumference_wavelengths * math.tan(
        math.radians(design.pitch_angle_deg)
    )


def helix_gain_kraus(design: HelixDesign) -> float:
    """Boresight directivity in dBi from the Kraus closed form."""
    d = (
        15.0
        * design.circumference_wavelengths**2
        * design.turns
        * spacing_from_pitch(design)
    )
    return 10.0 * math.log10(d)


def helix_hpbw_kraus(design: HelixDesign) -> float:
    """Half-power beamwidth in degrees from the Kraus closed form."""
    s = spacing_from_pitch(design)
    return 52.0 / (design.circumference_wavelengths * math.sqrt(design.turns * s))


def helix_axial_ratio(design: HelixDesign) -> float:
    """Axial ratio (>= 1, dimensionless); approaches 1 as turns grow."""
    return (2.0 * design.turns + 1.0) / (2.0 * design.turns)


@dataclass(frozen=True)
class AntennaPattern:
    """Receive gain versus angular offset from boresight.

    ``gaussian_beam`` evaluates an idealized main lobe,

        G(psi) = G0 - 12 * (psi / HPBW)^2   [dBi]

    clamped from below at ``G0 + sidelobe_floor_db``.  The -12 coefficient
    puts the -3 dB point exactly at half the beamwidth.

    ``tabulated`` interpolates ``table`` (rows of (offset_deg, gain_dbi),
    offsets ascending in [0, 180]) linearly in dB and clamps to the end
    values beyond the tabulated range.
    """

    boresight_gain_dbi: float
    hpbw_deg: float
    model: str = GAUSSIAN_BEAM
    sidelobe_floor_db: float = -20.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.model not in (GAUSSIAN_BEAM, TABULATED):
            raise ValueError(f"unknown pattern model {self.model!r}")
        if not self.hpbw_deg > 0.0:
            raise ValueError("hpbw_deg must be positive")
        if self.model == GAUSSIAN_BEAM:
            if self.sidelobe_floor_db >= 0.0:
                raise ValueError("sidelobe_floor_db must be negative")
        else:
            if len(self.table) == 0:
                raise ValueError("tabulated pattern requires a non-empty table")
            offsets = [row[0] for row in self.table]
            if any(not 0.0 <= o <= 180.0 for o in offsets):
                raise ValueError("table offsets must lie in [0, 180] degrees")
            if any(b <= a for a, b in zip(offsets, offsets[1:])):
                raise ValueError("table offsets must be strictly ascending")
            if any(g > self.boresight_gain_dbi for _, g in self.table):
                raise ValueError("table gain exceeds boresight gain")


def pattern_gain(pattern: AntennaPattern, offset_deg: float) -> float:
    """Gain in dBi at an angular offset from boresight.

    Offsets outside [0, 180] are rejected rather than wrapped; callers
    measure offsets as great-circle angles, which never leave that range.
    """
    if not 0.0 <= offset_deg <= 180.0:
        raise ValueError(f"offset must be in [0, 180] degrees, got {offset_deg}")
    if pattern.model == GAUSSIAN_BEAM:
        g = pattern.boresight_gain_dbi - 12.0 * (offset_deg / pattern.hpbw_deg) ** 2
        return max(g, pattern.boresight_gain_dbi + pattern.sidelobe_floor_db)
    return _interp_table(pattern.table, offset_deg)


def _interp_table(
    table: tuple[tuple[float, float], ...], offset_deg: float
) -> float:
    if offset_deg <= table[0][0]:
        return table[0][1]
    if offset_deg >= table[-1][0]:
        return table[-1][1]
    offsets = [row[0] for row in table]
    hi = bisect_right(offsets, offset_deg)
    x0, y0 = table[hi - 1]
    x1, y1 = table[hi]
    frac = (offset_deg - x0) / (x1 - x0)
    return y0 + frac * (y1 - y0)


def angular_offset(pose: AngularPose, direction: AngularPose) -> float:
    """Great-circle offset in degrees between a pose and a target direction."""
    return angular_offset_deg(pose, direction)


def tabulated_pattern(rows: list[tuple[float, float]]) -> AntennaPattern:
    """Build a tabulated pattern from (offset_deg, gain_dbi) rows.

    Rows are sorted by offset; boresight gain is the table maximum and the
    half-power width is twice the first offset at which the interpolated
    gain crosses 3 dB below boresight (twice the last tabulated offset if
    it never does).
    """
    ordered = sorted(rows, key=lambda r: (r[0], r[1]))
    table = tuple((float(o), float(g)) for o, g in ordered)
    peak = max(g for _, g in table)
    return AntennaPattern(
        boresight_gain_dbi=peak,
        hpbw_deg=_table_hpbw(table, peak),
        model=TABULATED,
        table=table,
    )


def _table_hpbw(table: tuple[tuple[float, float], ...], peak: float) -> float:
    half_power = peak - 3.0
    for (x0, y0), (x1, y1) in zip(table, table[1:]):
        if y0 > half_power >= y1:
            # Linear crossing inside this segment.
            frac = (y0 - half_power) / (y0 - y1)
            return 2.0 * (x0 + frac * (x1 - x0))
    # Never falls 3 dB below the peak within the table: report twice the
    # tabulated extent, or a full circle for a degenerate one-point table.
    return 2.0 * table[-1][0] if table[-1][0] > 0.0 else 360.0


def load_measured_pattern(path: str) -> AntennaPattern:
    """Read a measured pattern from a two-column CSV of offset_deg,gain_dbi.

    A single header line is skipped only when neither of its fields parses
    as a number.  Blank lines are ignored.  Any other malformed content is
    reported with its line number.
    """
    rows: list[tuple[float, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 2:
            raise ValueError(
                f"{path}: line {lineno}: expected 2 fields, got {len(fields)}"
            )
        try:
            offset = float(fields[0])
            gain = float(fields[1])
        except ValueError:
            if lineno == 1 and not rows and _is_header(fields):
                continue
            raise ValueError(
                f"{path}: line {lineno}: could not parse {line!r} as numbers"
            ) from None
        if not 0.0 <= offset <= 180.0:
            raise ValueError(
                f"{path}: line {lineno}: offset {offset} outside [0, 180] degrees"
            )
        rows.append((offset, gain))
    if not rows:
        raise ValueError(f"{path}: no pattern rows found")
    return tabulated_pattern(rows)


def _is_header(fields: list[str]) -> bool:
    for f in fields:
        try:
            float(f)
        except ValueError:
            continue
        return False
    return True
