"""Two-axis rotor: gear-train step math, travel limits, homing, move planning.

Azimuth is driven through a 300:12 herringbone pair (25:1) and elevation
through a 40:1 worm, both on 200 step/rev steppers at 16 microsteps.  The
worm cannot be backdriven, so elevation holds position unpowered and only
azimuth accumulates reversal backlash.

Homing sweeps each axis onto its minimum-travel limit switch: a fast seek
until the switch closes, a fixed 2 degree retreat, then a slow re-approach;
the counters are zeroed to the travel minimum on the second closure.  A
switch closure after zeroing is a fault.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .geometry import AngularPose

DEFAULT_SETTLE_S = 0.5
HOMING_BACKOFF_DEG = 2.0

# Slack when checking commanded angles against travel, so grid endpoints
# computed in floating point cannot fall a rounding error outside range.
_TRAVEL_TOL_DEG = 1e-9


class Axis(enum.Enum):
    AZ = "az"
    EL = "el"


class HomingPhase(enum.Enum):
    IDLE = "idle"
    SEEKING_FAST = "seeking_fast"
    BACKING_OFF = "backing_off"
    SEEKING_SLOW = "seeking_slow"
    ZEROED = "zeroed"
    FAULT = "fault"


class TravelError(ValueError):
    """Requested angle lies outside the axis travel."""


class NotHomedError(RuntimeError):
    """Operation requires absolute position but the rotor is not homed."""


@dataclass(frozen=True)
class RotorConfig:
    az_gear_ratio: float = 25.0
    el_gear_ratio: float = 40.0
    full_steps_per_rev: int = 200
    microsteps: int = 16
    az_travel_deg: tuple[float, float] = (-90.0, 90.0)
    el_travel_deg: tuple[float, float] = (0.0, 80.0)
    az_backlash_steps: int = 0
    el_backlash_steps: int = 0

    def __post_init__(self) -> None:
        if self.az_gear_ratio <= 0 or self.el_gear_ratio <= 0:
            raise ValueError("gear ratios must be positive")
        if self.full_steps_per_rev < 1 or self.microsteps < 1:
            raise ValueError("step counts must be >= 1")
        for name, (lo, hi) in (
            ("az", self.az_travel_deg),
            ("el", self.el_travel_deg),
        ):
            if not lo < hi:
                raise ValueError(f"{name} travel must satisfy min < max")
        if self.az_backlash_steps < 0 or self.el_backlash_steps < 0:
            raise ValueError("backlash cannot be negative")

    def gear_ratio(self, axis: Axis) -> float:
        return self.az_gear_ratio if axis is Axis.AZ else self.el_gear_ratio

    def travel_deg(self, axis: Axis) -> tuple[float, float]:
        return self.az_travel_deg if axis is Axis.AZ else self.el_travel_deg

    def backlash_steps(self, axis: Axis) -> int:
        return self.az_backlash_steps if axis is Axis.AZ else self.el_backlash_steps

    def steps_per_degree(self, axis: Axis) -> float:
        return (
            self.full_steps_per_rev * self.microsteps * self.gear_ratio(axis) / 360.0
        )


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def angle_to_steps(config: RotorConfig, axis: Axis, angle_deg: float) -> int:
    """Microstep count for an absolute axis angle (round half away from zero)."""
    lo, hi = config.travel_deg(axis)
    if not lo - _TRAVEL_TOL_DEG <= angle_deg <= hi + _TRAVEL_TOL_DEG:
        raise TravelError(
            f"{axis.value} angle {angle_deg} outside travel [{lo}, {hi}] degrees"
        )
    return _round_half_away(angle_deg * config.steps_per_degree(axis))


def steps_to_angle(config: RotorConfig, axis: Axis, steps: int) -> float:
    """Axis angle in degrees for a microstep count (no travel check)."""
    return steps / config.steps_per_degree(axis)


def backoff_steps(config: RotorConfig, axis: Axis) -> int:
    """Microsteps in the fixed homing retreat for one axis."""
    return _round_half_away(HOMING_BACKOFF_DEG * config.steps_per_degree(axis))


# ---------------------------------------------------------------------------
# State and homing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RotorState:
    """Logical controller state; counters are meaningful only once homed."""

    az_steps: int = 0
    el_steps: int = 0
    homed: bool = False
    phase: HomingPhase = HomingPhase.IDLE
    # Sign of the last commanded motion per axis; 0 = no history.
    last_az_dir: int = 0
    last_el_dir: int = 0


def home_step(config: RotorConfig, state: RotorState, limit_hit: bool) -> RotorState:
    """Advance the homing machine by one observation of the limit switches.

    ``limit_hit`` is the combined switch reading sampled after the motion
    of the previous phase finished.  Transitions:

      IDLE          -> SEEKING_FAST  (unconditionally; starts the fast seek)
      SEEKING_FAST  -> BACKING_OFF   once the switch closes
      BACKING_OFF   -> SEEKING_SLOW  once the 2 degree retreat opens it
      SEEKING_SLOW  -> ZEROED        on the second closure; counters are set
                                     to the travel minima and homed is set
      ZEROED        -> FAULT         on any further closure
      FAULT                          absorbing
    """
    phase = state.phase
    if phase is HomingPhase.IDLE:
        return replace(state, phase=HomingPhase.SEEKING_FAST, homed=False)
    if phase is HomingPhase.SEEKING_FAST:
        if limit_hit:
            return replace(state, phase=HomingPhase.BACKING_OFF)
        return state
    if phase is HomingPhase.BACKING_OFF:
        # Each call is one completed retreat; stay put while the switch is
        # still closed and retreat again on the next call.
        if not limit_hit:
            return replace(state, phase=HomingPhase.SEEKING_SLOW)
        return state
    if phase is HomingPhase.SEEKING_SLOW:
        if limit_hit:
            return RotorState(
                az_steps=angle_to_steps(config, Axis.AZ, config.az_travel_deg[0]),
                el_steps=angle_to_steps(config, Axis.EL, config.el_travel_deg[0]),
                homed=True,
                phase=HomingPhase.ZEROED,
            )
        return state
    if phase is HomingPhase.ZEROED:
        if limit_hit:
            return replace(state, phase=HomingPhase.FAULT, homed=False)
        return state
    return state


def homed_state(config: RotorConfig) -> RotorState:
    """State immediately after a successful homing run."""
    return RotorState(
        az_steps=angle_to_steps(config, Axis.AZ, config.az_travel_deg[0]),
        el_steps=angle_to_steps(config, Axis.EL, config.el_travel_deg[0]),
        homed=True,
        phase=HomingPhase.ZEROED,
    )


# ---------------------------------------------------------------------------
# Move planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MovePlan:
    """Relative step deltas to command, plus the post-move settle time.

    Deltas include any azimuth backlash make-up, so they can differ from
    the change in the logical counters tracked by ``RotorState``.
    """

    az_delta_steps: int
    el_delta_steps: int
    settle_s: float


def plan_move(
    config: RotorConfig,
    state: RotorState,
    target: AngularPose,
    settle_s: float = DEFAULT_SETTLE_S,
) -> tuple[MovePlan, RotorState]:
    """Plan a move to ``target`` and return the plan with the updated state.

    Direction reversals on an axis are padded with that axis' backlash
    steps so the gear teeth re-engage before counting resumes.  The
    worm-driven elevation axis defaults to zero backlash, and a move that
    does not change elevation always commands zero elevation steps.
    """
    if not state.homed:
        raise NotHomedError("cannot plan an absolute move before homing")
    az_target = angle_to_steps(config, Axis.AZ, target.az_deg)
    el_target = angle_to_steps(config, Axis.EL, target.el_deg)
    az_delta = az_target - state.az_steps
    el_delta = el_target - state.el_steps

    az_cmd = az_delta
    last_az = state.last_az_dir
    if az_delta != 0:
        direction = 1 if az_delta > 0 else -1
        if last_az != 0 and direction != last_az:
            az_cmd += direction * config.az_backlash_steps
        last_az = direction
    el_cmd = el_delta
    last_el = state.last_el_dir
    if el_delta != 0:
        direction = 1 if el_delta > 0 else -1
        if last_el != 0 and direction != last_el:
            el_cmd += direction * config.el_backlash_steps
        last_el = direction

    plan = MovePlan(az_delta_steps=az_cmd, el_delta_steps=el_cmd, settle_s=settle_s)
    new_state = replace(
        state,
        az_steps=az_target,
        el_steps=el_target,
        last_az_dir=last_az,
        last_el_dir=last_el,
    )
    return plan, new_state


def pose_of(config: RotorConfig, state: RotorState) -> AngularPose:
    """Pose implied by the logical counters.  Errors when not homed."""
    if not state.homed:
        raise NotHomedError("rotor position is unknown before homing")
    return AngularPose(
        az_deg=steps_to_angle(config, Axis.AZ, state.az_steps),
        el_deg=steps_to_angle(config, Axis.EL, state.el_steps),
    )
