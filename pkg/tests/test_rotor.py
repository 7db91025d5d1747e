import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emscan.geometry import AngularPose
from emscan.rotor import (
    Axis,
    HomingPhase,
    NotHomedError,
    RotorConfig,
    RotorState,
    TravelError,
    angle_to_steps,
    backoff_steps,
    home_step,
    homed_state,
    plan_move,
    pose_of,
    steps_to_angle,
)

CFG = RotorConfig()


def test_steps_per_degree():
    # 200 * 16 * 25 / 360 and 200 * 16 * 40 / 360
    assert CFG.steps_per_degree(Axis.AZ) == pytest.approx(80000.0 / 360.0)
    assert CFG.steps_per_degree(Axis.EL) == pytest.approx(128000.0 / 360.0)


def test_angle_to_steps_reference_points():
    assert angle_to_steps(CFG, Axis.AZ, 90.0) == 20000
    assert angle_to_steps(CFG, Axis.AZ, -90.0) == -20000
    assert angle_to_steps(CFG, Axis.AZ, 1.8) == 400
    assert angle_to_steps(CFG, Axis.EL, 1.0) == 356  # 355.55... rounds away
    assert angle_to_steps(CFG, Axis.AZ, 0.0) == 0


def test_angle_to_steps_rounds_half_away_from_zero():
    # 0.5 steps falls exactly on the half boundary at 0.00225 degrees az
    assert angle_to_steps(CFG, Axis.AZ, 0.00225) == 1
    assert angle_to_steps(CFG, Axis.AZ, -0.00225) == -1


def test_steps_to_angle():
    assert steps_to_angle(CFG, Axis.AZ, 1) == pytest.approx(0.0045)
    assert steps_to_angle(CFG, Axis.AZ, 20000) == pytest.approx(90.0)


def test_travel_enforced():
    with pytest.raises(TravelError):
        angle_to_steps(CFG, Axis.AZ, 90.5)
    with pytest.raises(TravelError):
        angle_to_steps(CFG, Axis.EL, -0.5)
    # a float hair outside the range is tolerated (grid endpoint arithmetic)
    assert angle_to_steps(CFG, Axis.AZ, 90.0 + 1e-10) == 20000


def test_backoff_steps():
    assert backoff_steps(CFG, Axis.AZ) == 444
    assert backoff_steps(CFG, Axis.EL) == 711


def test_config_validation():
    with pytest.raises(ValueError):
        RotorConfig(az_gear_ratio=0.0)
    with pytest.raises(ValueError):
        RotorConfig(microsteps=0)
    with pytest.raises(ValueError):
        RotorConfig(az_travel_deg=(10.0, -10.0))
    with pytest.raises(ValueError):
        RotorConfig(az_backlash_steps=-1)
    with pytest.raises(ValueError):
        RotorConfig(el_backlash_steps=-1)


@settings(max_examples=200)
@given(angle=st.floats(min_value=-90.0, max_value=90.0, allow_nan=False))
def test_angle_round_trip_bound(angle):
    steps = angle_to_steps(CFG, Axis.AZ, angle)
    back = steps_to_angle(CFG, Axis.AZ, steps)
    # round half away from zero: error at most half a microstep
    assert abs(back - angle) <= 0.5 / CFG.steps_per_degree(Axis.AZ) + 1e-12


# ---------------------------------------------------------------------------
# Homing state machine
# ---------------------------------------------------------------------------


def test_homing_nominal_sequence():
    s = RotorState()
    assert s.phase is HomingPhase.IDLE and not s.homed
    s = home_step(CFG, s, False)
    assert s.phase is HomingPhase.SEEKING_FAST
    s = home_step(CFG, s, False)  # still seeking
    assert s.phase is HomingPhase.SEEKING_FAST
    s = home_step(CFG, s, True)  # switch closes
    assert s.phase is HomingPhase.BACKING_OFF
    s = home_step(CFG, s, False)  # retreat opened the switch
    assert s.phase is HomingPhase.SEEKING_SLOW
    s = home_step(CFG, s, False)
    assert s.phase is HomingPhase.SEEKING_SLOW
    s = home_step(CFG, s, True)  # second closure: zero here
    assert s.phase is HomingPhase.ZEROED
    assert s.homed
    assert s.az_steps == -20000
    assert s.el_steps == 0


def test_homing_retreat_repeats_until_switch_opens():
    s = RotorState(phase=HomingPhase.BACKING_OFF)
    s = home_step(CFG, s, True)  # retreat finished but switch still closed
    assert s.phase is HomingPhase.BACKING_OFF
    s = home_step(CFG, s, True)
    assert s.phase is HomingPhase.BACKING_OFF
    s = home_step(CFG, s, False)
    assert s.phase is HomingPhase.SEEKING_SLOW


def test_homing_fault_on_closure_after_zeroed():
    s = homed_state(CFG)
    s = home_step(CFG, s, False)
    assert s.phase is HomingPhase.ZEROED and s.homed
    s = home_step(CFG, s, True)
    assert s.phase is HomingPhase.FAULT
    assert not s.homed
    # fault is absorbing
    assert home_step(CFG, s, False).phase is HomingPhase.FAULT
    assert home_step(CFG, s, True).phase is HomingPhase.FAULT


def test_homed_state_counters():
    s = homed_state(CFG)
    assert (s.az_steps, s.el_steps) == (-20000, 0)
    assert pose_of(CFG, s) == AngularPose(-90.0, 0.0)


# ---------------------------------------------------------------------------
# Move planning
# ---------------------------------------------------------------------------


def _centered_state():
    return RotorState(az_steps=0, el_steps=0, homed=True, phase=HomingPhase.ZEROED)


def test_plan_move_requires_homed():
    with pytest.raises(NotHomedError):
        plan_move(CFG, RotorState(), AngularPose(0.0, 0.0))
    with pytest.raises(NotHomedError):
        pose_of(CFG, RotorState())


def test_plan_move_simple_delta():
    plan, state = plan_move(CFG, _centered_state(), AngularPose(1.8, 0.0))
    assert plan.az_delta_steps == 400
    assert plan.el_delta_steps == 0
    assert plan.settle_s == 0.5
    assert state.az_steps == 400
    assert state.last_az_dir == 1


def test_plan_move_identity_is_zero():
    plan, state = plan_move(CFG, _centered_state(), AngularPose(0.0, 0.0))
    assert plan.az_delta_steps == 0 and plan.el_delta_steps == 0
    assert state.last_az_dir == 0  # no motion, no direction history


def test_plan_move_az_backlash_on_reversal():
    cfg = RotorConfig(az_backlash_steps=5)
    plan, state = plan_move(cfg, _centered_state(), AngularPose(1.8, 0.0))
    assert plan.az_delta_steps == 400
    plan, state = plan_move(cfg, state, AngularPose(0.0, 0.0))
    # reversal pads the commanded delta; the logical counter lands on 0
    assert plan.az_delta_steps == -405
    assert state.az_steps == 0
    plan, state = plan_move(cfg, state, AngularPose(-1.8, 0.0))
    # same direction as before: no extra padding
    assert plan.az_delta_steps == -400


def test_plan_move_el_backlash_per_axis():
    cfg = RotorConfig(az_backlash_steps=5, el_backlash_steps=7)
    plan, state = plan_move(cfg, _centered_state(), AngularPose(0.0, 1.0))
    assert plan.el_delta_steps == 356
    plan, state = plan_move(cfg, state, AngularPose(0.0, 0.0))
    assert plan.el_delta_steps == -363
    assert state.el_steps == 0


def test_plan_move_el_unchanged_commands_zero():
    cfg = RotorConfig(az_backlash_steps=5, el_backlash_steps=9)
    state = RotorState(az_steps=0, el_steps=711, homed=True, phase=HomingPhase.ZEROED)
    plan, _ = plan_move(cfg, state, AngularPose(10.0, steps_to_angle(cfg, Axis.EL, 711)))
    assert plan.el_delta_steps == 0


def test_plan_move_settle_override():
    plan, _ = plan_move(CFG, _centered_state(), AngularPose(1.0, 1.0), settle_s=2.0)
    assert plan.settle_s == 2.0


def test_plan_move_target_outside_travel():
    with pytest.raises(TravelError):
        plan_move(CFG, _centered_state(), AngularPose(91.0, 0.0))


@settings(max_examples=100)
@given(
    a=st.floats(min_value=-90.0, max_value=90.0, allow_nan=False),
    b=st.floats(min_value=-90.0, max_value=90.0, allow_nan=False),
)
def test_plan_move_sequences_land_on_target(a, b):
    state = _centered_state()
    for target in (a, b):
        plan, state = plan_move(CFG, state, AngularPose(target, 0.0))
        assert state.az_steps == angle_to_steps(CFG, Axis.AZ, target)
        assert abs(pose_of(CFG, state).az_deg - target) <= 0.00225 + 1e-12
