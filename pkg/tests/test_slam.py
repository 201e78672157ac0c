"""EKF-SLAM: motion/measurement models, association, and consistency."""

import math

import numpy as np
import pytest

from echomaze.slam import (
    OMEGA_MAX,
    BeliefState,
    InvalidInput,
    Match,
    NewLandmark,
    NoiseParams,
    NumericalFailure,
    RangeBearing,
    UnknownLandmark,
    associate,
    augment,
    estimate_pose,
    extract_landmarks,
    initial_belief,
    measurement_model,
    motion_jacobians,
    motion_step,
    observe,
    pose_nees,
    predict,
    update,
)
from echomaze.world import MotionInput, Pose, PoseInWall, wrap_angle

from helpers import make_maze


def fd_jacobian(fn, x0, eps=1e-6):
    """Central finite differences of a vector function, column per input."""
    x0 = np.asarray(x0, dtype=np.float64)
    cols = []
    for i in range(x0.size):
        hi = x0.copy()
        lo = x0.copy()
        hi[i] += eps
        lo[i] -= eps
        cols.append((np.asarray(fn(hi)) - np.asarray(fn(lo))) / (2 * eps))
    return np.stack(cols, axis=1)


def rel_close(numeric, analytic, tol=1e-5):
    scale = np.maximum(1.0, np.abs(analytic))
    return np.all(np.abs(numeric - analytic) <= tol * scale)


def min_eig(cov):
    return float(np.linalg.eigvalsh(cov).min())


def step_pose(x, y, th, v, om, dt):
    # independent closed form of one Euler unicycle step
    return np.array([x + v * dt * math.cos(th), y + v * dt * math.sin(th), th + om * dt])


ROOM = make_maze(
    [
        "#######",
        "#.....#",
        "#.....#",
        "#.....#",
        "#.....#",
        "#.....#",
        "#######",
    ],
    cell_size=0.5,
)

Q = NoiseParams()
Q_ZERO = NoiseParams(sigma_v=0.0, sigma_omega=0.0, sigma_r=0.0, sigma_phi=0.0)


def belief_with_landmarks(pose, landmarks, pose_var=1e-4, lm_var=1e-4):
    b = initial_belief(pose, np.diag([pose_var] * 3))
    mean = list(b.mean)
    for x, y in landmarks:
        mean.extend([x, y])
    n = len(mean)
    cov = np.zeros((n, n))
    cov[:3, :3] = b.covariance
    for i in range(3, n):
        cov[i, i] = lm_var
    return BeliefState(np.array(mean), cov)


class TestBeliefState:
    def test_theta_wrapped_and_cov_symmetrized(self):
        cov = np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        b = BeliefState(np.array([0.0, 0.0, math.pi + 0.5]), cov)
        assert b.mean[2] == pytest.approx(-math.pi + 0.5)
        assert np.array_equal(b.covariance, b.covariance.T)
        assert b.covariance[0, 1] == pytest.approx(0.1)

    def test_shape_validation(self):
        with pytest.raises(InvalidInput):
            BeliefState(np.zeros(4), np.zeros((4, 4)))
        with pytest.raises(InvalidInput):
            BeliefState(np.zeros(5), np.zeros((3, 3)))

    def test_landmark_count(self):
        b = belief_with_landmarks(Pose(0, 0, 0), [(1, 0), (0, 1)])
        assert b.landmark_count == 2

    def test_initial_belief_defaults(self):
        b = initial_belief(Pose(1.0, 2.0, 0.5))
        assert np.allclose(b.mean, [1.0, 2.0, 0.5])
        assert np.array_equal(b.covariance, np.zeros((3, 3)))
        with pytest.raises(InvalidInput):
            initial_belief(Pose(0, 0, 0), np.zeros((2, 2)))


class TestMotionStep:
    def test_forward_one_meter(self):
        p = motion_step(Pose(0, 0, 0), MotionInput(1.0, 0.0, 1.0))
        assert (p.x, p.y, p.theta) == pytest.approx((1.0, 0.0, 0.0))

    def test_matches_closed_form(self):
        p = motion_step(Pose(0.3, -0.2, 0.7), MotionInput(0.4, -0.3, 0.5))
        expected = step_pose(0.3, -0.2, 0.7, 0.4, -0.3, 0.5)
        assert (p.x, p.y, p.theta) == pytest.approx(tuple(expected))

    def test_bad_dt(self):
        with pytest.raises(InvalidInput):
            motion_step(Pose(0, 0, 0), MotionInput(1.0, 0.0, 0.0))


class TestPredict:
    def test_stationary_grows_by_gmgt(self):
        b = belief_with_landmarks(Pose(1.0, 1.0, 0.3), [(2.0, 2.0)])
        u = MotionInput(0.0, 0.0, 0.5)
        after = predict(b, u, Q)
        assert np.allclose(after.mean, b.mean)
        _, g3 = motion_jacobians(0.3, u)
        m = np.diag([Q.sigma_v**2, Q.sigma_omega**2])
        grown = b.covariance.copy()
        grown[:3, :3] += g3 @ m @ g3.T
        assert np.allclose(after.covariance, grown, atol=1e-12)

    def test_unit_forward_from_origin(self):
        b = initial_belief(Pose(0, 0, 0))
        after = predict(b, MotionInput(1.0, 0.0, 1.0), Q)
        assert np.allclose(after.mean, [1.0, 0.0, 0.0])

    def test_landmark_means_unchanged(self):
        b = belief_with_landmarks(Pose(0.5, 0.5, 1.0), [(1.5, 0.5), (0.5, 1.5)])
        after = predict(b, MotionInput(0.2, 0.1, 0.4), Q)
        assert np.array_equal(after.mean[3:], b.mean[3:])

    def test_jacobians_match_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x, y = rng.uniform(-2, 2, size=2)
            th = rng.uniform(-1.5, 1.5)
            v = rng.uniform(-0.9, 0.9)
            om = rng.uniform(-1.5, 1.5)
            dt = rng.uniform(0.1, 1.0)
            u = MotionInput(v, om, dt)
            f3, g3 = motion_jacobians(th, u)
            f_num = fd_jacobian(
                lambda s: step_pose(s[0], s[1], s[2], v, om, dt), [x, y, th]
            )
            g_num = fd_jacobian(
                lambda w: step_pose(x, y, th, w[0], w[1], dt), [v, om]
            )
            assert rel_close(f_num, f3)
            assert rel_close(g_num, g3)

    def test_rejects_bad_input(self):
        b = initial_belief(Pose(0, 0, 0))
        with pytest.raises(InvalidInput):
            predict(b, MotionInput(0.1, 0.0, 0.0), Q)
        with pytest.raises(InvalidInput):
            predict(b, MotionInput(5.0, 0.0, 0.1), Q)
        with pytest.raises(InvalidInput):
            predict(b, MotionInput(0.1, OMEGA_MAX + 1.0, 0.1), Q)


class TestExtractLandmarks:
    def test_single_free_cell(self):
        maze = make_maze(["###", "#.#", "###"], cell_size=0.5)
        pts = extract_landmarks(maze)
        assert pts == [(0.5, 0.5), (1.0, 0.5), (0.5, 1.0), (1.0, 1.0)]

    def test_open_rectangle_by_hand(self):
        maze = make_maze(["####", "#..#", "#..#", "####"], cell_size=1.0)
        # hand-applied definition: every vertex ringing the 2x2 free block
        # mixes Wall and Free; the center vertex sees four Free cells
        expected = [
            (1.0, 1.0),
            (2.0, 1.0),
            (3.0, 1.0),
            (1.0, 2.0),
            (3.0, 2.0),
            (1.0, 3.0),
            (2.0, 3.0),
            (3.0, 3.0),
        ]
        assert extract_landmarks(maze) == expected

    def test_pure_function(self):
        assert extract_landmarks(ROOM) == extract_landmarks(ROOM)


class TestObserve:
    def test_dead_ahead_zero_noise(self):
        pose = Pose(1.0, 1.0, 0.0)
        out = observe(pose, [(2.0, 1.0)], Q_ZERO, 2.0, math.pi / 2, ROOM, seed=1)
        assert len(out) == 1
        z, idx = out[0]
        assert idx == 0
        assert z.r == pytest.approx(1.0)
        assert z.phi == pytest.approx(0.0)

    def test_behind_robot_cut_by_fov(self):
        pose = Pose(2.0, 1.0, 0.0)
        out = observe(pose, [(1.0, 1.0)], Q_ZERO, 2.0, math.pi / 2, ROOM, seed=1)
        assert out == []

    def test_out_of_range_cut(self):
        pose = Pose(0.75, 1.0, 0.0)
        out = observe(pose, [(2.9, 1.0)], Q_ZERO, 2.0, math.pi / 2, ROOM, seed=1)
        assert out == []

    def test_occluded_landmark_absent(self):
        maze = make_maze(
            ["#####", "#...#", "#.#.#", "#...#", "#####"], cell_size=0.5
        )
        pose = Pose(0.75, 1.25, 0.0)
        # a point on the far side of the center wall, straight ahead
        hidden = [(1.8, 1.25)]
        assert observe(pose, hidden, Q_ZERO, 2.0, math.pi, maze, seed=1) == []
        # the wall's own near corner is on the sight line end, so it is seen
        corner = [(1.0, 1.0)]
        out = observe(pose, corner, Q_ZERO, 2.0, math.pi, maze, seed=1)
        assert [idx for _, idx in out] == [0]

    def test_pose_in_wall(self):
        with pytest.raises(PoseInWall):
            observe(Pose(0.1, 0.1, 0.0), [], Q_ZERO, 2.0, math.pi, ROOM, seed=1)

    def test_deterministic_and_noise_seeded(self):
        pose = Pose(1.0, 1.0, 0.5)
        lms = extract_landmarks(ROOM)
        a = observe(pose, lms, Q, 2.0, math.pi / 2, ROOM, seed=9)
        b = observe(pose, lms, Q, 2.0, math.pi / 2, ROOM, seed=9)
        c = observe(pose, lms, Q, 2.0, math.pi / 2, ROOM, seed=10)
        assert a == b
        assert a != c
        assert all(z.r > 0 and -math.pi < z.phi <= math.pi for z, _ in a)


class TestAssociate:
    def test_empty_map_new_landmark(self):
        b = initial_belief(Pose(0, 0, 0))
        assert isinstance(associate(b, RangeBearing(1.0, 0.0), Q), NewLandmark)

    def test_exact_measurement_matches(self):
        b = belief_with_landmarks(Pose(1.0, 1.0, 0.2), [(2.0, 1.0), (1.0, 2.0)])
        predicted, _ = measurement_model(b, 1)
        z = RangeBearing(predicted[0], predicted[1])
        res = associate(b, z, Q)
        assert isinstance(res, Match) and res.index == 1

    def test_far_measurement_gated_out(self):
        b = belief_with_landmarks(Pose(1.0, 1.0, 0.0), [(2.0, 1.0)])
        res = associate(b, RangeBearing(0.3, 2.5), Q)
        assert isinstance(res, NewLandmark)

    def test_tie_takes_lowest_index(self):
        b = belief_with_landmarks(Pose(0.0, 0.0, 0.0), [(1.0, 0.0), (1.0, 0.0)])
        res = associate(b, RangeBearing(1.0, 0.0), Q)
        assert isinstance(res, Match) and res.index == 0

    def test_monte_carlo_against_hidden_ids(self):
        lms = extract_landmarks(ROOM)
        rng = np.random.default_rng(42)
        free = [
            (c, r)
            for r in range(1, ROOM.height_cells - 1)
            for c in range(1, ROOM.width_cells - 1)
        ]
        total = 0
        correct = 0
        trial = 0
        while total < 1000:
            c, r = free[rng.integers(len(free))]
            pose = Pose(
                (c + 0.5) * ROOM.cell_size,
                (r + 0.5) * ROOM.cell_size,
                rng.uniform(-math.pi, math.pi),
            )
            b = belief_with_landmarks(pose, lms)
            trial += 1
            for z, true_id in observe(
                pose, lms, Q, 2.0, math.pi / 2, ROOM, seed=trial
            ):
                total += 1
                res = associate(b, z, Q)
                if isinstance(res, Match) and res.index == true_id:
                    correct += 1
        assert correct / total >= 0.99


class TestUpdate:
    def test_unknown_landmark(self):
        b = belief_with_landmarks(Pose(0, 0, 0), [(1.0, 0.0)])
        with pytest.raises(UnknownLandmark):
            update(b, RangeBearing(1.0, 0.0), 1, Q)

    def test_zero_innovation_keeps_mean(self):
        b = belief_with_landmarks(Pose(0.4, 0.8, math.pi - 0.01), [(0.1, 1.4)])
        predicted, _ = measurement_model(b, 0)
        z = RangeBearing(predicted[0], predicted[1])
        after = update(b, z, 0, Q)
        assert np.allclose(after.mean, b.mean, atol=1e-12)
        assert np.trace(after.covariance) <= np.trace(b.covariance) + 1e-12

    def test_h_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 20:
            x, y = rng.uniform(-1, 1, size=2)
            th = rng.uniform(-1.0, 1.0)
            # landmark ahead-ish keeps the bearing away from the wrap seam
            lx = x + rng.uniform(0.5, 2.0)
            ly = y + rng.uniform(-0.8, 0.8)
            state = np.array([x, y, th, lx, ly])
            cov = np.eye(5) * 1e-3

            def h_of(s):
                predicted, _ = measurement_model(BeliefState(s, cov), 0)
                return predicted

            if abs(h_of(state)[1]) > 2.5:
                continue
            checked += 1
            _, h_ana = measurement_model(BeliefState(state, cov), 0)
            h_num = fd_jacobian(h_of, state)
            assert rel_close(h_num, h_ana)

    def test_psd_after_thousand_updates(self):
        rng = np.random.default_rng(3)
        b = belief_with_landmarks(
            Pose(1.0, 1.0, 0.0), [(2.0, 1.0), (1.0, 2.0), (0.3, 0.3)], pose_var=0.01
        )
        for _ in range(1000):
            j = int(rng.integers(b.landmark_count))
            predicted, _ = measurement_model(b, j)
            z = RangeBearing(
                max(1e-3, predicted[0] + rng.normal(0, Q.sigma_r)),
                predicted[1] + rng.normal(0, Q.sigma_phi),
            )
            b = update(b, z, j, Q)
            assert min_eig(b.covariance) >= -1e-9

    def test_singular_innovation_raises(self):
        b = belief_with_landmarks(
            Pose(0, 0, 0), [(1.0, 0.0)], pose_var=0.0, lm_var=0.0
        )
        bad = NoiseParams(sigma_r=0.0, sigma_phi=0.0)
        with pytest.raises(NumericalFailure):
            update(b, RangeBearing(1.0, 0.0), 0, bad)


class TestAugment:
    def test_geometry_straight_ahead(self):
        b = initial_belief(Pose(0, 0, 0), np.eye(3) * 1e-4)
        after = augment(b, RangeBearing(2.0, 0.0), Q)
        assert after.landmark_count == 1
        assert np.allclose(after.mean[3:], [2.0, 0.0])

    def test_geometry_rotated(self):
        b = initial_belief(Pose(1.0, 1.0, math.pi / 2), np.eye(3) * 1e-4)
        after = augment(b, RangeBearing(1.0, 0.0), Q)
        assert np.allclose(after.mean[3:], [1.0, 2.0])

    def test_cross_terms_against_hand_formula(self):
        cov = np.array([[0.02, 0.003, 0.001], [0.003, 0.03, 0.002], [0.001, 0.002, 0.01]])
        b = initial_belief(Pose(0.5, -0.2, 0.4), cov)
        z = RangeBearing(1.3, -0.3)
        after = augment(b, z, Q)
        a = 0.4 + z.phi
        gp = np.array([[1, 0, -z.r * math.sin(a)], [0, 1, z.r * math.cos(a)]])
        assert np.allclose(after.covariance[3:, :3], gp @ cov)

    def test_psd_for_random_augmentations(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            base = rng.normal(size=(3, 3))
            b = initial_belief(
                Pose(*rng.uniform(-1, 1, size=3)), base @ base.T * 0.01
            )
            after = augment(
                b,
                RangeBearing(rng.uniform(0.1, 2.0), rng.uniform(-math.pi, math.pi)),
                Q,
            )
            assert min_eig(after.covariance) >= -1e-9
            assert np.array_equal(after.covariance, after.covariance.T)


class TestEstimatePose:
    def test_fresh_belief(self):
        b = initial_belief(Pose(0.7, 0.9, -0.3), np.eye(3) * 0.01)
        pose, cov = estimate_pose(b)
        assert (pose.x, pose.y, pose.theta) == pytest.approx((0.7, 0.9, -0.3))
        assert np.allclose(cov, np.eye(3) * 0.01)

    def test_after_unit_predict(self):
        b = predict(initial_belief(Pose(0, 0, 0)), MotionInput(1.0, 0.0, 1.0), Q)
        pose, _ = estimate_pose(b)
        assert (pose.x, pose.y, pose.theta) == pytest.approx((1.0, 0.0, 0.0))

    def test_block_index(self):
        b = belief_with_landmarks(Pose(0, 0, 0), [(1.0, 1.0)], pose_var=0.123)
        _, cov = estimate_pose(b)
        assert np.allclose(cov, b.covariance[:3, :3])


def run_circuit(steps, process_noise, measure_noise, seed, start_cov=None):
    """Drive a circle in the open room, returning per-step (belief, truth).

    Association is by hidden id so the loop isolates filter behavior from
    the association policy (which has its own tests).
    """
    rng = np.random.default_rng(seed)
    lms = extract_landmarks(ROOM)
    start = Pose(1.75, 1.25, 0.0)
    if start_cov is None:
        truth = start
        belief = initial_belief(start)
    else:
        truth = Pose(*(np.array([start.x, start.y, start.theta])
                       + np.linalg.cholesky(start_cov) @ rng.normal(size=3)))
        belief = initial_belief(start, start_cov)
    u = MotionInput(0.3, 0.5, 0.25)
    mapped = {}
    history = []
    gen = NoiseParams(
        sigma_v=process_noise[0] or 1e-12,
        sigma_omega=process_noise[1] or 1e-12,
        sigma_r=measure_noise[0],
        sigma_phi=measure_noise[1],
    )
    for k in range(steps):
        actual = MotionInput(
            u.v + rng.normal(0.0, process_noise[0]),
            u.omega + rng.normal(0.0, process_noise[1]),
            u.dt,
        )
        truth = motion_step(truth, actual)
        belief = predict(belief, u, Q)
        for z, true_id in observe(
            truth, lms, gen, 2.0, math.pi / 2, ROOM, seed=seed * 100003 + k
        ):
            if true_id in mapped:
                belief = update(belief, z, mapped[true_id], Q)
            else:
                mapped[true_id] = belief.landmark_count
                belief = augment(belief, z, Q)
        history.append((belief, truth))
    return history


class TestClosedLoop:
    def test_zero_noise_tracks_exactly(self):
        history = run_circuit(
            200, process_noise=(0.0, 0.0), measure_noise=(0.0, 0.0), seed=1
        )
        sq = [
            (b.mean[0] - t.x) ** 2 + (b.mean[1] - t.y) ** 2 for b, t in history
        ]
        rmse = math.sqrt(sum(sq) / len(sq))
        assert rmse <= 1e-6
        worst_heading = max(
            abs(wrap_angle(b.mean[2] - t.theta)) for b, t in history
        )
        assert worst_heading <= 1e-6

    def test_nees_within_chi2_band(self):
        start_cov = np.diag([1e-4, 1e-4, 1e-4])
        run_means = []
        for run in range(50):
            history = run_circuit(
                50,
                process_noise=(Q.sigma_v, Q.sigma_omega),
                measure_noise=(Q.sigma_r, Q.sigma_phi),
                seed=1000 + run,
                start_cov=start_cov,
            )
            vals = []
            for b, t in history:
                err = np.array(
                    [
                        b.mean[0] - t.x,
                        b.mean[1] - t.y,
                        wrap_angle(b.mean[2] - t.theta),
                    ]
                )
                vals.append(float(err @ np.linalg.inv(b.covariance[:3, :3]) @ err))
            run_means.append(sum(vals) / len(vals))
        grand = sum(run_means) / len(run_means)
        assert 2.36 <= grand <= 3.72

    def test_pose_nees_helper_matches_oracle(self):
        history = run_circuit(
            10,
            process_noise=(Q.sigma_v, Q.sigma_omega),
            measure_noise=(Q.sigma_r, Q.sigma_phi),
            seed=77,
            start_cov=np.diag([1e-4] * 3),
        )
        b, t = history[-1]
        err = np.array(
            [b.mean[0] - t.x, b.mean[1] - t.y, wrap_angle(b.mean[2] - t.theta)]
        )
        expected = float(err @ np.linalg.inv(b.covariance[:3, :3]) @ err)
        assert pose_nees(b, t) == pytest.approx(expected, rel=1e-9)


class TestPsdFuzz:
    def test_random_operation_sequences(self):
        rng = np.random.default_rng(2026)
        b = initial_belief(Pose(1.0, 1.0, 0.0), np.diag([1e-4] * 3))
        ops = 0
        while ops < 2000:
            roll = rng.random()
            if roll < 0.5:
                u = MotionInput(
                    rng.uniform(-0.9, 0.9),
                    rng.uniform(-1.5, 1.5),
                    rng.uniform(0.05, 0.5),
                )
                b = predict(b, u, Q)
            elif roll < 0.8 and b.landmark_count > 0:
                j = int(rng.integers(b.landmark_count))
                predicted, _ = measurement_model(b, j)
                z = RangeBearing(
                    max(1e-3, predicted[0] + rng.normal(0, 0.05)),
                    predicted[1] + rng.normal(0, 0.05),
                )
                b = update(b, z, j, Q)
            elif b.landmark_count < 12:
                z = RangeBearing(
                    rng.uniform(0.2, 2.0), rng.uniform(-math.pi, math.pi)
                )
                b = augment(b, z, Q)
            else:
                continue
            ops += 1
            assert abs(b.mean[2]) <= math.pi
            assert min_eig(b.covariance) >= -1e-9
