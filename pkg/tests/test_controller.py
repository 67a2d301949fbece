import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from foveawalk.controller import (
    THETA_MAX, CapExceeded, ControllerConfig, Gating, OutsideTrackedSpace, RedirectionState,
    ResetPolicy, commit_rotation, free_run, perform_reset, predict_out_of_bounds,
    required_redirection, schedule_gain, steer_to_center, to_physical, to_virtual,
)
from foveawalk.geometry import Pose2, Rect, RigidTransform2, Vec2, signed_heading_error

from conftest import angle_close, close_vec

PTS = Rect.square(4.0)
CFG = ControllerConfig()
STRICT = ControllerConfig(gating=Gating.STRICT)
DT = 1000.0 / 120.0

inside = st.builds(Vec2, st.floats(-2, 2), st.floats(-2, 2))
heading = st.floats(-180, 180, exclude_min=True)
transforms = st.builds(RigidTransform2, st.floats(-180, 180), st.builds(Vec2, st.floats(-50, 50), st.floats(-50, 50)))


# steering

@pytest.mark.parametrize("pos, target", [((2, 0), 180), ((0, -2), 90), ((-1, -1), 45)])
def test_steer_to_center_points_at_center(pos, target):
    cmd = steer_to_center(Pose2(Vec2(*pos), 0), PTS)
    assert cmd.active and cmd.target_heading == pytest.approx(target)


def test_steer_at_center_is_inactive():
    assert not steer_to_center(Pose2(Vec2(0.01, 0), 30), PTS).active


def test_steer_outside_raises():
    with pytest.raises(OutsideTrackedSpace):
        steer_to_center(Pose2(Vec2(2.5, 0), 0), PTS)


@pytest.mark.parametrize("h, target, req", [(0, 180, -180), (33, 33, 0), (90, 100, -10)])
def test_required_redirection_examples(h, target, req):
    assert required_redirection(Pose2(Vec2(0, 0), h), target) == pytest.approx(req)


# gain scheduling

def test_commit_inside_blink_window():
    st_ = RedirectionState(theta_offset=2.0)
    delta = schedule_gain(st_, 2.0, 150.0, DT, [(90.0, 260.0)], False, CFG)
    assert delta == pytest.approx(2.0) and st_.theta_offset == pytest.approx(0.0)


def test_one_commit_per_window():
    st_ = RedirectionState(theta_offset=10.0)
    w = [(90.0, 260.0)]
    assert schedule_gain(st_, 10.0, 100.0, DT, w, False, CFG) == pytest.approx(5.0)
    assert schedule_gain(st_, 10.0, 110.0, DT, w, False, CFG) == 0.0
    assert schedule_gain(st_, 10.0, 300.0, DT, [(295.0, 400.0)], False, CFG) > 0


def test_gaze_refresh_outside_window_commits():
    st_ = RedirectionState(theta_offset=-3.0)
    assert schedule_gain(st_, -8.0, 50.0, DT, [], True, CFG) == pytest.approx(-3.0 - 6 * DT / 1000)


def test_offset_never_exceeds_theta_max():
    st_ = RedirectionState()
    for k in range(5000):
        schedule_gain(st_, 20.0, k * DT, DT, [], False, CFG)
        assert abs(st_.theta_offset) <= THETA_MAX
    assert st_.theta_offset == pytest.approx(THETA_MAX)


def test_strict_gating_without_window_or_gaze_move():
    st_ = RedirectionState()
    for k in range(100):
        assert schedule_gain(st_, 10.0, k * DT, DT, [], False, STRICT) == 0.0
    assert st_.theta_offset == 0.0


def test_commit_never_opposes_request():
    st_ = RedirectionState(theta_offset=5.0)
    assert schedule_gain(st_, -4.0, 100.0, DT, [(90.0, 200.0)], False, CFG) == 0.0


def test_schedule_rejects_bad_dt():
    with pytest.raises(ValueError):
        schedule_gain(RedirectionState(), 1.0, 0.0, 0.0, [], False, CFG)


@given(st.lists(st.tuples(st.floats(-180, 180), st.booleans(), st.booleans()), min_size=1, max_size=300),
       st.sampled_from([CFG, STRICT]))
def test_schedule_gain_caps(steps, cfg):
    st_ = RedirectionState()
    for k, (req, in_window, moved) in enumerate(steps):
        now = k * DT
        windows = [(now - 5.0 - (k % 7), now + 50.0)] if in_window else []
        before = st_.theta_offset
        d = schedule_gain(st_, req, now, DT, windows, moved, cfg)
        assert abs(st_.theta_offset) <= cfg.theta_max + 1e-12
        assert abs(d) <= cfg.per_commit_cap + 1e-12
        assert abs(d) <= abs(req) + 1e-12
        assert d == 0.0 or d * req > 0
        assert abs(st_.theta_offset - (before - d)) <= cfg.smooth_rate * DT / 1000 + 1e-9


@given(st.floats(-180, 180), st.floats(-180, 180), st.floats(0.01, 30))
def test_commit_does_not_increase_heading_error(h, target, offset):
    # the walker holds virtual heading, so a commit of d turns the physical heading by -d
    requested = required_redirection(Pose2(Vec2(0, 0), h), target)
    st_ = RedirectionState(theta_offset=math.copysign(min(offset, THETA_MAX), requested or 1.0))
    d = schedule_gain(st_, requested, 100.0, DT, [(90.0, 200.0)], False, CFG)
    before = abs(signed_heading_error(h, target))
    after = abs(signed_heading_error(h - d, target))
    assert after <= before + 1e-9


# commits and mapping

def test_zero_commit_keeps_mapping():
    st_ = RedirectionState(mapping=RigidTransform2(12.0, Vec2(1, 2)))
    before = st_.mapping
    commit_rotation(st_, 0.0, Vec2(0.5, 0.5))
    assert st_.mapping == before


def test_commit_at_user_rotates_heading_only():
    st_ = RedirectionState()
    p = Pose2(Vec2(0.7, -0.3), 20.0)
    commit_rotation(st_, 10.0, p.position)
    v = to_virtual(p, st_)
    assert close_vec(v.position, p.position) and v.heading == pytest.approx(30.0)


def test_commits_accumulate():
    st_ = RedirectionState()
    commit_rotation(st_, 5.0, Vec2(0, 0))
    commit_rotation(st_, 5.0, Vec2(1, 0))
    assert st_.theta_acc == pytest.approx(10.0) and st_.total_abs_gain == pytest.approx(10.0)
    assert st_.commits == 2


def test_commit_over_cap_raises():
    with pytest.raises(CapExceeded):
        commit_rotation(RedirectionState(), 6.0, Vec2(0, 0), cap=5.0)


@given(transforms, inside, heading, st.floats(-5, 5))
def test_commit_preserves_virtual_position(mapping, pos, h, d):
    st_ = RedirectionState(mapping=mapping)
    p = Pose2(pos, h)
    before = to_virtual(p, st_)
    commit_rotation(st_, d, pos)
    after = to_virtual(p, st_)
    assert close_vec(before.position, after.position, 1e-9 * 100)
    assert angle_close(after.heading, before.heading + d, 1e-9)


def test_to_virtual_examples():
    p = Pose2(Vec2(1, 1), 45)
    assert to_virtual(p, RedirectionState()) == p
    st_ = RedirectionState(mapping=RigidTransform2.rotation_about(p.position, 90), theta_acc=90.0)
    v = to_virtual(p, st_)
    assert close_vec(v.position, p.position) and v.heading == pytest.approx(135)
    st_.theta_offset = 4.0
    assert to_virtual(p, st_, include_view_offset=True).heading == pytest.approx(139)


@given(transforms, inside, heading)
def test_to_physical_inverts_to_virtual(mapping, pos, h):
    st_ = RedirectionState(mapping=mapping)
    back = to_physical(to_virtual(Pose2(pos, h), st_), st_)
    assert close_vec(back.position, pos, 1e-8) and angle_close(back.heading, h)


# boundary prediction

def test_predict_out_of_bounds_examples():
    fast = ControllerConfig()
    assert predict_out_of_bounds(Pose2(Vec2(1.9, 0), 0), 1.0, PTS, fast)
    for h in range(-180, 180, 15):
        assert not predict_out_of_bounds(Pose2(Vec2(0, 0), h), 1.0, PTS, fast)
    assert not predict_out_of_bounds(Pose2(Vec2(1.7, 0), 0), 0.0, PTS, fast)
    assert predict_out_of_bounds(Pose2(Vec2(1.85, 0), 180), 0.0, PTS, fast)
    with pytest.raises(ValueError):
        predict_out_of_bounds(Pose2(Vec2(0, 0), 0), -1.0, PTS, fast)


def test_free_run():
    assert free_run(Pose2(Vec2(0, 0), 0), PTS, 0.2) == pytest.approx(1.8)
    assert free_run(Pose2(Vec2(0, 0), 45), PTS, 0.2) == pytest.approx(1.8 * math.sqrt(2))
    assert free_run(Pose2(Vec2(1.9, 0), 0), PTS, 0.2) == 0.0


# resets

def test_two_to_one_example():
    p = Pose2(Vec2(1.8, 0.0), 30.0)
    st_ = RedirectionState(mapping=RigidTransform2.aligning(p, Pose2(Vec2(5, 5), 75.0)))
    after, out = perform_reset(p, st_, PTS, ResetPolicy.TWO_TO_ONE)
    assert after.heading == pytest.approx(-150.0)
    assert out.virtual_heading_after == pytest.approx(75.0) and out.resets_count == 1
    again, out2 = perform_reset(after, st_, PTS, "two_to_one")
    assert again.heading == pytest.approx(30.0) and out2.resets_count == 2


def test_freeze_turn_faces_center():
    p = Pose2(Vec2(1.8, 0.0), 10.0)
    st_ = RedirectionState(mapping=RigidTransform2.aligning(p, Pose2(Vec2(0, 0), -20.0)))
    after, out = perform_reset(p, st_, PTS, ResetPolicy.FREEZE_TURN)
    assert after.heading == pytest.approx(180.0) and out.virtual_heading_after == pytest.approx(-20.0)


def test_freeze_backup_steps_toward_center():
    p = Pose2(Vec2(1.8, 0.0), 0.0)
    st_ = RedirectionState()
    after, _ = perform_reset(p, st_, PTS, ResetPolicy.FREEZE_BACKUP)
    assert close_vec(after.position, Vec2(1.3, 0.0)) and after.heading == 0.0


@given(transforms, inside, heading, st.sampled_from(list(ResetPolicy)))
def test_reset_keeps_virtual_pose(mapping, pos, h, policy):
    p = Pose2(pos, h)
    st_ = RedirectionState(mapping=mapping)
    virt = to_virtual(p, st_)
    after, _ = perform_reset(p, st_, PTS, policy)
    v2 = to_virtual(after, st_)
    assert close_vec(v2.position, virt.position, 1e-8) and angle_close(v2.heading, virt.heading, 1e-9)
    if policy is ResetPolicy.TWO_TO_ONE:
        assert angle_close(after.heading, h + 180.0, 0.0)


@pytest.mark.parametrize("kwargs", [{"per_commit_cap": 0}, {"per_commit_cap": 20}, {"smooth_rate": -1},
                                    {"boundary_margin": -0.1}, {"gating": "sometimes"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ControllerConfig(**kwargs)


def test_config_coerces_strings():
    c = ControllerConfig(gating="strict", reset_policy="freeze_turn")
    assert c.gating is Gating.STRICT and c.reset_policy is ResetPolicy.FREEZE_TURN
