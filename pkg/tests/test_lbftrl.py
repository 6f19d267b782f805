import math
from fractions import Fraction

import numpy as np
import pytest

from bisons.geometry import PiProjection, uniform_portfolio
from bisons.lbftrl import (
    AdversaryPlan,
    InfeasibleMovementError,
    assemble_pi_hessian,
    build_target_sequence,
    build_target_sequence_exact,
    generate_and_run,
    grad_pi_objective,
    lbftrl_play,
    move_to_x,
    pull_to_center,
    regret_vs_next_iterate,
    run_lbftrl,
    stability_term,
    validate_target_sequence_exact,
)


class TestLbftrlPlay:
    def test_empty_history_is_uniform(self):
        assert np.allclose(lbftrl_play([], eta=1.0, d=4), 0.25)

    def test_single_asset_drift_matches_bisection_oracle(self):
        # history of k copies of e_1, d = 2: root of (k + w)/a = w/(1-a)
        eta = 0.5
        w = 1.0 / eta
        prev = 0.5
        for k in (1, 3, 10, 50):
            R = np.tile(np.array([1.0, 0.0]), (k, 1))
            x = lbftrl_play(R, eta, tol=1e-13)
            lo, hi = 1e-12, 1.0 - 1e-12
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if -(k + w) / mid + w / (1.0 - mid) > 0.0:
                    hi = mid
                else:
                    lo = mid
            assert x[0] == pytest.approx(0.5 * (lo + hi), abs=1e-9)
            assert x[0] > prev  # drifts monotonically toward the winning asset
            prev = x[0]

    def test_symmetric_history_is_uniform(self):
        R = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert np.allclose(lbftrl_play(R, eta=2.0), 0.5, atol=1e-9)


class TestTargetSequence:
    def test_length_2_to_the_d_minus_2(self):
        for d in range(2, 9):
            assert len(build_target_sequence(d)) == 2**d - 2

    def test_first_target_outcome(self):
        pairs = build_target_sequence(3)
        t0, o0 = pairs[0]
        assert np.allclose(t0, [1.0, 0.0, 0.0])
        assert np.allclose(o0, [0.0, 0.5, 0.5])

    def test_exact_validity_d3_to_d8(self):
        for d in range(3, 9):
            ok, msg = validate_target_sequence_exact(build_target_sequence_exact(d), d)
            assert ok, msg

    def test_reverse_direction_fails(self):
        # <t_j, o_i> for j < i can vanish: t_1 = e_1 against the outcome of the
        # {1,2}-supported target is exactly zero, so only the j < i ordering of
        # the validity condition is checkable.
        pairs = build_target_sequence_exact(3)
        t_first = pairs[0][0]
        o_later = pairs[3][1]
        assert pairs[3][0] == (Fraction(1, 2), Fraction(1, 2), Fraction(0))
        assert sum(a * b for a, b in zip(t_first, o_later)) == 0

    def test_outcomes_complement_supports(self):
        for d in (3, 5):
            for t, o in build_target_sequence_exact(d):
                for ti, oi in zip(t, o):
                    assert (ti == 0) != (oi == 0)
                assert sum(t) == 1 and sum(o) == 1

    def test_dimension_bounds(self):
        with pytest.raises(ValueError):
            build_target_sequence(1)
        with pytest.raises(ValueError):
            build_target_sequence(13)


class TestPullToCenter:
    def test_center_fixed_point(self):
        plan = AdversaryPlan.build(3, 10_000, 0.5)
        c = uniform_portfolio(3)
        for s in range(plan.layer_count + 1):
            assert np.allclose(pull_to_center(c, s, plan), c, atol=1e-15)

    def test_unit_scale_identity(self):
        plan = AdversaryPlan.build(2, 10_000, 0.5)
        plan.scales = np.array([1.0])
        plan.layer_count = 0
        x = np.array([0.3, 0.7])
        assert np.allclose(pull_to_center(x, 0, plan), x, atol=1e-15)

    def test_affine_arithmetic(self):
        plan = AdversaryPlan.build(2, 10_000, 0.5)
        plan.scales = np.array([0.9])
        plan.layer_count = 0
        out = pull_to_center(np.array([1.0, 0.0]), 0, plan)
        assert np.allclose(out, [0.95, 0.05], atol=1e-15)

    def test_layer_out_of_range(self):
        plan = AdversaryPlan.build(2, 10_000, 0.5)
        with pytest.raises(ValueError):
            pull_to_center(np.array([0.5, 0.5]), plan.layer_count + 1, plan)

    def test_on_target_inner_products(self):
        # <t^(s), o^(s')> = (1 - c_s c_s') / d for every layer pair
        plan = AdversaryPlan.build(3, 10_000, 0.5)
        for t, o in plan.targets:
            for s in range(plan.layer_count + 1):
                for s2 in range(plan.layer_count + 1):
                    ip = float(pull_to_center(t, s, plan) @ pull_to_center(o, s2, plan))
                    expected = (1.0 - plan.scales[s] * plan.scales[s2]) / plan.d
                    assert ip == pytest.approx(expected, abs=1e-12)


class TestMoveToX:
    def test_zero_gradient_returns_center(self):
        proj = PiProjection(3)
        r = move_to_x(uniform_portfolio(3), np.zeros(2), 10_000, proj)
        assert np.allclose(r, 1.0 / 3.0, atol=1e-15)

    def test_projected_norm_cap(self):
        rng = np.random.default_rng(0)
        proj = PiProjection(3)
        T = 10_000
        for _ in range(100):
            g = rng.normal(size=2) * 10.0 ** rng.integers(-3, 4)
            tgt = rng.dirichlet(np.ones(3))
            r = move_to_x(tgt, g, T, proj)
            assert (r >= 0.0).all()
            assert np.linalg.norm(proj.project(r)) <= T**-0.5 + 1e-15

    def test_finishing_cap_zeroes_target_gradient(self):
        # small gradient: the finishing factor binds and one movement return
        # cancels the accumulated gradient at the target exactly
        proj = PiProjection(3)
        eta = 1.0
        T = 10_000
        tgt = np.array([0.5, 0.3, 0.2])
        hist = np.empty((0, 3))
        g0 = grad_pi_objective(tgt, hist, eta, proj)
        scaled = g0 * 1e-3 / np.linalg.norm(g0)  # pretend a small residual gradient
        r = move_to_x(tgt, scaled, T, proj)
        # post-return gradient contribution: -Pi r / <tgt, r> must equal -scaled
        contrib = -proj.project(r) / float(tgt @ r)
        assert np.abs(contrib + scaled).max() <= 1e-12

    def test_termination_bound_on_instrumented_pin(self):
        # steer a fresh objective (barrier only) onto a pulled-in target and
        # count movement steps against 2 sqrt(T) ||grad|| / d + 1
        d, T, eta = 3, 10_000, 1.0
        plan = AdversaryPlan.build(d, T, 0.5)
        proj = PiProjection(d)
        tgt = pull_to_center(plan.targets[0][0], 0, plan)
        hist = []
        g0 = grad_pi_objective(tgt, np.array(hist), eta, proj)
        bound = 2.0 * math.sqrt(T) * float(np.linalg.norm(g0)) / d + 1.0
        steps = 0
        while True:
            g = grad_pi_objective(tgt, np.array(hist) if hist else np.empty((0, d)), eta, proj)
            if float(np.linalg.norm(g)) <= 1e-12:
                break
            hist.append(move_to_x(tgt, g, T, proj))
            steps += 1
            assert steps <= bound + 1
        assert steps <= bound


class TestStabilityTerm:
    def test_uniform_return_gives_zero(self):
        proj = PiProjection(3)
        x = np.array([0.2, 0.5, 0.3])
        grad = proj.project(-uniform_portfolio(3) / float(x @ uniform_portfolio(3)))
        H = assemble_pi_hessian(x, np.array([uniform_portfolio(3)]), 1.0, proj)
        assert stability_term(grad, H) <= 1e-20

    def test_matches_finite_difference_hessian(self):
        # t = 1, d = 2: Hessian of the chart objective by central differences
        proj = PiProjection(2)
        eta = 0.7
        r = np.array([0.8, 0.2])
        x = np.array([0.45, 0.55])
        hist = np.array([r])

        def chart_value(v):
            y, _ = proj.lift(v)
            return float(-np.log(hist @ y).sum() - (1.0 / eta) * np.log(y).sum())

        v0 = proj.project(x)
        h = 1e-5
        fd = (chart_value(v0 + h) - 2.0 * chart_value(v0) + chart_value(v0 - h)) / (h * h)
        H = assemble_pi_hessian(x, hist, eta, proj)
        assert H[0, 0] == pytest.approx(fd, rel=1e-6)
        grad = proj.project(-r / float(x @ r))
        assert stability_term(grad, H) == pytest.approx(float(grad @ grad) / fd, rel=1e-6)

    def test_invariant_to_basis_rotation(self):
        rng = np.random.default_rng(1)
        d = 4
        proj = PiProjection(d)
        theta = 0.6
        rot = np.eye(d - 1)
        rot[:2, :2] = [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
        proj_rot = PiProjection(d, basis=rot @ proj.basis)
        hist = rng.dirichlet(np.ones(d), size=6)
        x = rng.dirichlet(np.ones(d)) * 0.9 + 0.025
        r = hist[-1]
        t1 = stability_term(proj.project(-r / float(x @ r)),
                            assemble_pi_hessian(x, hist, 1.3, proj))
        t2 = stability_term(proj_rot.project(-r / float(x @ r)),
                            assemble_pi_hessian(x, hist, 1.3, proj_rot))
        assert abs(t1 - t2) <= 1e-10


@pytest.fixture(scope="module")
def d2_bad_run():
    plan = AdversaryPlan.build(2, 10_000, 0.5)
    return plan, generate_and_run(plan, eta=1.0)


class TestGenerateAndRun:
    def test_d2_smoke_terminates_with_flags(self, d2_bad_run):
        plan, res = d2_bad_run
        assert len(res.records) <= 10_000
        # every round is a movement return or a pulled outcome, nothing else
        T = 10_000
        proj = PiProjection(2)
        outcome_layers = {}
        for rec, r, flag in zip(res.records, res.returns, res.movement_flags):
            assert rec.is_movement == flag
            if flag:
                assert np.linalg.norm(proj.project(r)) <= T**-0.5 + 1e-15
            else:
                i, k, s = rec.visit
                expected = pull_to_center(plan.targets[i][1], s, plan)
                assert np.abs(r - expected).max() <= 1e-12
        assert res.completed_visits >= 1
        # at this pull-in exponent the movement budget dominates the horizon
        assert res.truncated
        assert res.movement_flags.sum() + res.completed_visits == len(res.records)

    def test_movement_hessian_contribution_bound(self, d2_bad_run):
        # movement rounds contribute at most d^2/T/(1 - d T^{-1/2})^2 each to
        # the Hessian trace at any fixed target, so their total stays O(d^2)
        plan, res = d2_bad_run
        proj = PiProjection(2)
        d, T = 2, 10_000
        cap = d * d / T / (1.0 - d * T**-0.5) ** 2
        movement = res.returns[res.movement_flags]
        for t, _ in plan.targets:
            tgt = pull_to_center(t, 0, plan)
            g = (movement @ proj.basis.T) / (movement @ tgt)[:, None]
            contributions = (g * g).sum(axis=1)
            assert contributions.max() <= cap * (1.0 + 1e-9)
            assert contributions.sum() <= cap * len(movement) * (1.0 + 1e-9)

    def test_regret_stability_sandwich_random_run(self):
        rng = np.random.default_rng(2)
        d, T, eta = 3, 60, 1.0
        R = rng.dirichlet(np.ones(d), size=T)
        res = run_lbftrl(R, eta)
        reg, x_next = regret_vs_next_iterate(res)
        c2 = 1.0 / (1.0 + eta) ** 2
        terms = res.terms
        assert reg >= 0.5 * c2 * terms.sum() - 1e-6 * T

        # upper side with the measured curvature ratio along the trajectory
        proj = PiProjection(d)
        plays = np.vstack([res.plays, x_next])
        c1_hat = 1.0
        for t in range(T):
            H_t = assemble_pi_hessian(plays[t], R[: t + 1], eta, proj)
            L = np.linalg.cholesky(H_t)
            Li = np.linalg.inv(L)
            for lam in (0.25, 0.5, 0.75, 1.0):
                xbar = (1.0 - lam) * plays[t] + lam * plays[t + 1]
                Hbar = assemble_pi_hessian(xbar, R[: t + 1], eta, proj)
                c1_hat = max(c1_hat, float(np.linalg.eigvalsh(Li @ Hbar @ Li.T).max()))
        barrier = lambda x: -float(np.log(x).sum())
        upper = 0.5 * c1_hat * terms.sum() + (1.0 / eta) * (barrier(x_next) - barrier(res.plays[0]))
        assert reg <= upper + 1e-6 * T

    def test_truncation_never_wraps(self):
        plan = AdversaryPlan.build(2, 5000, 0.5)
        res = generate_and_run(plan, eta=1.0, T=300)
        assert res.truncated
        assert len(res.records) == 300


class TestPlanExport:
    def test_exact_rational_lines(self, tmp_path):
        from fractions import Fraction

        plan = AdversaryPlan.build(3, 10_000, 0.5)
        path = tmp_path / "plan.txt"
        plan.export(str(path))
        lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert len(lines) == len(plan.targets_exact)
        for line, (t, o) in zip(lines, plan.targets_exact):
            t_txt, o_txt = line.split("|")
            assert tuple(Fraction(v) for v in t_txt.split(",")) == t
            assert tuple(Fraction(v) for v in o_txt.split(",")) == o
