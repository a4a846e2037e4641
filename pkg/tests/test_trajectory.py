import math

import numpy as np
import pytest

from bicoptersim.trajectory import (
    ConstantReference,
    EllipseConfig,
    EllipseReference,
    PathReference,
    TrapezoidProfile,
    ellipse_rate,
    ellipse_ref,
    hilbert_waypoints,
    sample,
    time_parameterize,
    waypoints_to_csv,
)


def test_ellipse_reference_values():
    cfg = EllipseConfig()
    assert np.abs(ellipse_ref(0.0, cfg)).max() < 1e-12
    half = math.pi / cfg.omega
    expect = [2 * 5 * math.cos(cfg.psi), 2 * 5 * math.sin(cfg.psi)]
    assert ellipse_ref(half, cfg) == pytest.approx(expect, abs=1e-4)
    # axis-aligned case: second coordinate is the pure b-sinusoid
    flat = EllipseConfig(psi=0.0)
    for t in (0.3, 2.0, 7.7):
        assert ellipse_ref(t, flat)[1] == pytest.approx(
            3.0 * math.sin(0.1 * t), rel=1e-12)


def test_ellipse_periodicity():
    cfg = EllipseConfig()
    period = 2 * math.pi / cfg.omega
    for t in (0.0, 1.2, 34.5, 61.8):
        d = ellipse_ref(t, cfg) - ellipse_ref(t + period, cfg)
        assert np.abs(d).max() < 1e-9


def test_ellipse_rate_matches_finite_difference():
    cfg = EllipseConfig(psi=0.3, omega=0.25, a=4.0, b=2.0)
    h = 1e-6
    for t in (0.0, 3.3, 17.0):
        fd = (ellipse_ref(t + h, cfg) - ellipse_ref(t - h, cfg)) / (2 * h)
        assert ellipse_rate(t, cfg) == pytest.approx(fd, abs=1e-7)


def test_hilbert_order1():
    pts = hilbert_waypoints(1, 1.0)
    assert np.array_equal(pts, [[0.0, 0.0], [0.0, 1.0],
                                [1.0, 1.0], [1.0, 0.0]])


@pytest.mark.parametrize("order", [2, 3, 4])
def test_hilbert_structure(order):
    side = 4.0
    pts = hilbert_waypoints(order, side)
    n = 1 << order
    pitch = side / (n - 1)
    assert pts.shape == (4 ** order, 2)
    # every grid node exactly once
    nodes = {(round(x / pitch), round(y / pitch)) for x, y in pts}
    assert len(nodes) == 4 ** order
    assert nodes == {(i, j) for i in range(n) for j in range(n)}
    # axis-aligned unit-pitch steps
    steps = np.diff(pts, axis=0)
    assert np.allclose(np.abs(steps).sum(axis=1), pitch)
    assert (np.isclose(steps, 0).sum(axis=1) == 1).all()


def test_trapezoid_durations():
    # boundary between triangular and trapezoidal: L = v^2/a
    p = TrapezoidProfile.plan(1.0, 1.0, 1.0)
    assert p.duration == pytest.approx(2.0, abs=0)
    assert p.t_cruise == pytest.approx(0.0, abs=1e-15)
    p = TrapezoidProfile.plan(4.0, 1.0, 1.0)
    assert p.duration == pytest.approx(5.0, abs=0)
    assert p.t_cruise == pytest.approx(3.0, abs=0)
    # short segment: triangular
    p = TrapezoidProfile.plan(0.25, 1.0, 1.0)
    assert p.duration == pytest.approx(1.0)
    assert p.v_peak == pytest.approx(0.5)


def test_time_parameterize_durations_and_length():
    wps = hilbert_waypoints(2, 4.0)
    traj = time_parameterize(wps, 1.0, 1.0)
    seg_t = 4.0 / 3.0 + 1.0
    assert traj.duration == pytest.approx(15 * seg_t, rel=1e-12)
    # total path length equals pitch * (4^order - 1)
    total = sum(s.profile.length for s in traj.segments)
    assert total == pytest.approx((4.0 / 3.0) * 15, rel=1e-12)


def test_time_parameterize_skips_degenerate_segments():
    wps = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    traj = time_parameterize(wps, 1.0, 1.0)
    assert len(traj.segments) == 1
    with pytest.raises(ValueError):
        time_parameterize(np.array([[0.0, 0.0]]), 1.0, 1.0)
    with pytest.raises(ValueError):
        time_parameterize(np.array([[0.0, 0.0], [1.0, 0.0]]), 0.0, 1.0)


def test_profile_respects_limits():
    wps = hilbert_waypoints(2, 4.0)
    traj = time_parameterize(wps, 1.0, 1.0)
    ts = np.arange(0.0, traj.duration + 1e-9, 1e-3)
    pos = np.array([traj.sample(t) for t in ts])
    speed = np.linalg.norm(np.diff(pos, axis=0), axis=1) / 1e-3
    accel = np.abs(np.diff(speed)) / 1e-3
    assert speed.max() <= 1.0 + 1e-9
    assert accel.max() <= 1.0 + 1e-3
    # continuity: no jump exceeds v_max * dt (with slack)
    assert np.linalg.norm(np.diff(pos, axis=0), axis=1).max() \
        <= 1.0 * 1e-3 * 1.01


def test_sampling_clamps_and_cruise_interpolation():
    wps = np.array([[0.0, 0.0], [4.0, 0.0]])
    traj = time_parameterize(wps, 1.0, 1.0)
    assert np.array_equal(sample(traj, -1.0), wps[0])
    assert np.array_equal(sample(traj, 0.0), wps[0])
    assert np.array_equal(sample(traj, traj.duration + 3.0), wps[1])
    # cruise midpoint: t = 2.5 s into a 5 s run covers 0.5 + 1*(t-1) m
    assert sample(traj, 2.5) == pytest.approx([2.0, 0.0])
    assert traj.rate(2.5) == pytest.approx([1.0, 0.0])
    # at the corner the speed is zero
    assert traj.rate(traj.duration) == pytest.approx([0.0, 0.0])


def test_waypoints_csv(tmp_path):
    wps = hilbert_waypoints(1, 2.0)
    path = tmp_path / "wps.csv"
    waypoints_to_csv(wps, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "index,x,y"
    assert len(lines) == 5
    vals = [tuple(map(float, ln.split(",")[1:])) for ln in lines[1:]]
    assert np.allclose(vals, wps)


def test_reference_generators():
    const = ConstantReference((1.0, 1.0))
    assert np.array_equal(const.position(3.0), [1.0, 1.0])
    assert np.array_equal(const.rate(3.0), [0.0, 0.0])

    ell = EllipseReference(EllipseConfig())
    assert np.array_equal(ell.position(2.0), ellipse_ref(2.0, EllipseConfig()))

    wps = hilbert_waypoints(2, 4.0)
    ref = PathReference(time_parameterize(wps, 1.0, 1.0), settle=10.0)
    assert ref.duration == pytest.approx(45.0, rel=1e-9)
    assert np.array_equal(ref.position(ref.duration - 1.0), wps[-1])
    assert np.array_equal(ref.rate(ref.duration - 1.0), [0.0, 0.0])
