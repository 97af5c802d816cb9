import numpy as np
import pytest

from msvar.errors import ConvergenceError
from msvar.grid import tv_smooth
from msvar.levelset import (
    LevelSetState,
    curvature_central,
    delta_eps,
    evolve_step,
    hard_labels,
    heaviside_eps,
    levelset_energy,
    memberships,
    region_means,
    segment_levelset,
)
from msvar.phantoms import make_phantom

from oracles import (
    best_permutation_ious,
    centroids_loop,
    curvature_central_loop,
    heaviside_loop,
    levelset_velocity_loop,
)


def iou_binary(pred, gt):
    from msvar.metrics import overlap_metrics

    return max(overlap_metrics(pred, gt, 1)[0], overlap_metrics(1 - pred, gt, 1)[0])


# --------------------------------------------------- heaviside / delta

def test_heaviside_at_zero():
    assert heaviside_eps(np.zeros(1), 2.0)[0] == pytest.approx(0.5)
    assert delta_eps(np.zeros(1), 2.0)[0] == pytest.approx(1.0 / (np.pi * 2.0))


def test_heaviside_saturation_bound():
    eps = 0.7
    h = heaviside_eps(np.array([10 * eps, -10 * eps]), eps)
    assert abs(h[0] - 1.0) < 0.032
    assert abs(h[1] - 0.0) < 0.032


def test_delta_integrates_to_one():
    eps = 1.3
    t = np.linspace(-100 * eps, 100 * eps, 200001)
    integral = np.trapezoid(delta_eps(t, eps), t)
    assert abs(integral - 1.0) < 1e-2


def test_delta_is_derivative_of_heaviside():
    rng = np.random.default_rng(0)
    phi = rng.uniform(-3, 3, 50)
    eps, h = 0.9, 1e-6
    fd = (heaviside_eps(phi + h, eps) - heaviside_eps(phi - h, eps)) / (2 * h)
    d = delta_eps(phi, eps)
    assert np.max(np.abs(d - fd) / np.abs(fd)) < 1e-6


def test_nonpositive_eps_rejected():
    with pytest.raises(ValueError):
        heaviside_eps(np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        delta_eps(np.zeros(3), -1.0)


# -------------------------------------------------------- region means

def test_region_means_degenerate_outside_class():
    rng = np.random.default_rng(1)
    x = rng.random((10, 10, 1))
    state = LevelSetState(phi=np.full((1, 10, 10), 1e15))
    c = region_means(x, state)
    assert c[1, 0] == pytest.approx(x.mean(), abs=1e-9)
    assert abs(c[0, 0]) < 1e-3  # guarded empty class reports ~0


def test_region_means_disk_signed_distance():
    # sharp smoothing: the atan tails decay like eps/phi, so the 1e-3
    # tolerance needs eps_h well below a pixel
    image, labels, _ = make_phantom("two-phase", 64, 0.0, 0)
    ii, jj = np.mgrid[0:64, 0:64].astype(float)
    sdf = 16.0 - np.sqrt((ii - 31.5) ** 2 + (jj - 31.5) ** 2)
    state = LevelSetState(phi=sdf[None], eps_h=0.005)
    c = region_means(image, state)
    assert c[1, 0] == pytest.approx(0.8, abs=1e-3)
    assert c[0, 0] == pytest.approx(0.2, abs=1e-3)


def test_region_means_match_loop_oracle():
    rng = np.random.default_rng(2)
    x = rng.random((6, 6, 1))
    phi = rng.uniform(-2, 2, (2, 6, 6))
    state = LevelSetState(phi=phi, eps_h=1.4)
    h1 = heaviside_loop(phi[0], 1.4)
    h2 = heaviside_loop(phi[1], 1.4)
    chi = np.stack([(1 - h1) * (1 - h2), (1 - h1) * h2, h1 * (1 - h2), h1 * h2])
    want = centroids_loop(x, chi)
    assert np.max(np.abs(region_means(x, state) - want)) < 1e-9
    assert np.max(np.abs(memberships(state) - chi)) < 1e-12


# --------------------------------------------------------- evolve_step

def test_curvature_matches_loop_oracle():
    rng = np.random.default_rng(3)
    phi = rng.uniform(-1, 1, (7, 7))
    assert np.max(np.abs(curvature_central(phi) - curvature_central_loop(phi))) < 1e-9


def test_constant_image_curvature_motion_shrinks_tv():
    x = np.full((32, 32, 1), 0.5)
    rng = np.random.default_rng(4)
    ii, jj = np.mgrid[0:32, 0:32].astype(float)
    phi = np.sin(np.pi * (ii + rng.uniform(0, 8)) / 8.0) * np.sin(np.pi * jj / 8.0)
    state = LevelSetState(phi=phi[None], lambda_tv=0.1, dt=0.5)
    prev = tv_smooth(heaviside_eps(state.phi[0], state.eps_h))
    for _ in range(10):
        state = evolve_step(x, state)
        cur = tv_smooth(heaviside_eps(state.phi[0], state.eps_h))
        assert cur <= prev + 1e-9
        prev = cur


def test_two_phase_velocity_matches_loop_oracle():
    rng = np.random.default_rng(5)
    x = rng.random((6, 6, 1))
    phi = rng.uniform(-2, 2, (2, 6, 6))
    state = LevelSetState(phi=phi, eps_h=1.2, dt=0.4, lambda_tv=0.05)
    new = evolve_step(x, state)
    got_v1 = (new.phi[0] - phi[0]) / state.dt
    got_v2 = (new.phi[1] - phi[1]) / state.dt
    want_v1, want_v2 = levelset_velocity_loop(x, phi, 1.2, 0.05)
    assert np.max(np.abs(got_v1 - want_v1)) < 1e-9
    assert np.max(np.abs(got_v2 - want_v2)) < 1e-9


def test_disk_grows_from_small_circle():
    image, gt, _ = make_phantom("two-phase", 64, 0.0, 0)
    ii, jj = np.mgrid[0:64, 0:64].astype(float)
    sdf = 5.0 - np.sqrt((ii - 31.5) ** 2 + (jj - 31.5) ** 2)
    state = LevelSetState(phi=np.clip(sdf, -1, 1)[None], dt=0.5, lambda_tv=1e-2)
    for _ in range(300):
        state = evolve_step(image, state)
    assert iou_binary(hard_labels(state), gt) >= 0.98


def test_p2_decouples_when_phi2_and_image_constant():
    x = np.full((8, 8, 1), 0.5)
    rng = np.random.default_rng(6)
    phi1 = rng.uniform(-1, 1, (8, 8))
    phi2 = np.full((8, 8), 0.7)
    joint = LevelSetState(phi=np.stack([phi1, phi2]), dt=0.5, lambda_tv=0.05)
    single = LevelSetState(phi=phi1[None], dt=0.5, lambda_tv=0.05)
    new_joint = evolve_step(x, joint)
    new_single = evolve_step(x, single)
    assert np.max(np.abs(new_joint.phi[0] - new_single.phi[0])) < 1e-9


def test_cfl_guard():
    state = LevelSetState(phi=np.zeros((1, 8, 8)), dt=0.5, lambda_tv=1.0)
    with pytest.raises(ValueError):
        evolve_step(np.zeros((8, 8, 1)), state)


# ---------------------------------------------------- segment_levelset

def run_segment(*args, **kwargs):
    try:
        return segment_levelset(*args, **kwargs), True
    except ConvergenceError as err:
        return err.result, False


def test_segment_two_phase():
    image, gt, _ = make_phantom("two-phase", 64, 0.0, 0)
    (labels, trace), _ = run_segment(image, phases=1, lambda_tv=1e-2, dt=0.5, max_iters=800, seed=0)
    assert iou_binary(labels, gt) >= 0.98
    assert np.all(np.diff(trace[:, 0]) <= 1e-6)


def test_segment_four_phase():
    image, gt, _ = make_phantom("four-phase", 64, 0.0, 0)
    (labels, trace), _ = run_segment(
        image, phases=2, lambda_tv=1e-2, dt=2.0, eps_h=2.0, max_iters=3000, seed=0
    )
    assert min(best_permutation_ious(labels, gt, 4)) >= 0.95
    assert np.all(np.diff(trace[:, 0]) <= 1e-6)


def test_segment_constant_image():
    # pure curvature motion: needs a small dt*lambda product to stay
    # monotone through the cell-collapse events, and many steps to finish
    x = np.full((24, 24, 1), 0.5)
    (labels, trace), _ = run_segment(x, phases=1, lambda_tv=0.1, dt=0.05, max_iters=30000, seed=0)
    assert np.all(np.diff(trace[:, 0]) <= 1e-6)
    assert len(np.unique(labels)) == 1


def test_segment_rejects_bad_phases():
    with pytest.raises(ValueError):
        segment_levelset(np.zeros((16, 16, 1)), phases=3)
