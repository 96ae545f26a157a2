import math

import numpy as np
import pytest

from conftest import (
    assert_option_continuity,
    constant_agent,
    forced_termination_agent,
    scripted_policy_agent,
)
from gridmeta.agent import HyperParams, init_agent
from gridmeta.curriculum import CurriculumLevelSpec
from gridmeta.exploration import VisitCounts
from gridmeta.gridworld import GridTask, RewardSpec, generate_task
from gridmeta.rollout import (
    StateEncoder,
    encoder_for_task,
    evaluate,
    format_trajectory,
    option_segments,
    run_episode,
)


def square_task(size, traps=(), max_steps=100):
    return GridTask(
        width=size,
        height=size,
        start=(0, 0),
        goal=(size - 1, size - 1),
        traps=frozenset(traps),
        max_steps=max_steps,
        reward_spec=RewardSpec(),
        seed=0,
    )


class TestStateEncoder:
    def test_row_major_index(self):
        enc = StateEncoder(grid_width=7, grid_height=7)
        assert enc.n_inputs == 49
        assert enc.index((3, 2)) == 2 * 7 + 3
        vec = enc.encode_index(17)
        assert vec.shape == (49,) and vec[17] == 1.0 and vec.sum() == 1.0

    def test_fits(self):
        enc = StateEncoder(grid_width=6, grid_height=6)
        assert enc.fits(square_task(4))
        assert not enc.fits(square_task(7))

    def test_encoder_for_task(self):
        enc = encoder_for_task(square_task(5))
        assert (enc.grid_width, enc.grid_height) == (5, 5)


class TestRunEpisode:
    def test_width_mismatch_raises(self, rng):
        params = constant_agent(16)
        with pytest.raises(ValueError):
            run_episode(params, square_task(5), HyperParams(), None, rng)

    def test_oversized_task_raises(self, rng):
        params = constant_agent(16)
        enc = StateEncoder(grid_width=4, grid_height=4)
        with pytest.raises(ValueError):
            run_episode(params, square_task(5), HyperParams(), None, rng, encoder=enc)

    def test_greedy_stuck_agent_times_out_with_exact_intrinsic(self, rng):
        # all-zero agent: greedy option 0, action 0 (up) forever -> pinned
        # at the start cell until timeout; every visit counts the same cell
        task = square_task(4, max_steps=50)
        params = constant_agent(16)
        hp = HyperParams(eps_high=0.0, eps_option=0.0, eta=0.2, eps_count=1.0)
        counts = VisitCounts()
        traj = run_episode(params, task, hp, counts, rng)
        assert traj.length == 50 and not traj.success
        assert counts[0] == 50 and len(counts) == 1
        expected_bonus = sum(0.2 / math.sqrt(n + 1.0) for n in range(1, 51))
        assert traj.cumulative_total - traj.cumulative_ext == pytest.approx(
            expected_bonus
        )
        assert traj.cumulative_ext == pytest.approx(50 * -0.1)
        assert traj.mean_intrinsic() == pytest.approx(expected_bonus / 50)

    def test_counts_none_disables_bonus(self, rng):
        task = square_task(4, max_steps=20)
        params = constant_agent(16)
        hp = HyperParams(eta=5.0)
        traj = run_episode(params, task, hp, None, rng)
        assert all(t.r_int == 0.0 for t in traj.transitions)
        assert traj.cumulative_total == pytest.approx(traj.cumulative_ext)

    def test_scripted_policy_reaches_goal(self, rng):
        # right along the top row, then down the last column
        task = square_task(4)

        def action_of_state(s):
            x, y = s % 4, s // 4
            return 3 if x < 3 else 1

        params = scripted_policy_agent(16, action_of_state)
        traj = run_episode(params, task, HyperParams().greedy(), None, rng)
        assert traj.success and traj.length == 6
        assert traj.cumulative_ext == pytest.approx(6 * -0.1 + 10.0)
        assert all(t.option == 0 for t in traj.transitions)

    def test_option_continuity(self):
        rng = np.random.default_rng(3)
        params = init_agent(16, rng)
        task = square_task(4, traps=[(1, 1)], max_steps=60)
        hp = HyperParams(eps_high=0.3, eps_option=0.5)
        for _ in range(20):
            traj = run_episode(params, task, hp, VisitCounts(), rng)
            assert_option_continuity(traj)
            assert traj.transitions[-1].option_terminated

    def test_forced_termination_every_step(self, rng):
        params = forced_termination_agent(16, rng, logit=50.0)
        traj = run_episode(params, square_task(4, max_steps=30),
                           HyperParams(), VisitCounts(), rng)
        assert all(t.option_terminated for t in traj.transitions)
        segments = option_segments(traj)
        assert len(segments) == traj.length
        assert all(end - start == 1 for start, end, _ in segments)

    def test_suppressed_termination_single_segment(self, rng):
        params = forced_termination_agent(16, rng, logit=-50.0)
        traj = run_episode(params, square_task(4, max_steps=30),
                           HyperParams(), VisitCounts(), rng)
        segments = option_segments(traj)
        assert len(segments) == 1
        assert segments[0] == (0, traj.length, traj.transitions[0].option)
        # episode end still forces the terminated flag
        assert traj.transitions[-1].option_terminated

    def test_padded_encoder_indexes_reference_grid(self, rng):
        enc = StateEncoder(grid_width=7, grid_height=7)
        params = constant_agent(49)
        task = square_task(4, max_steps=10)
        traj = run_episode(params, task, HyperParams(), VisitCounts(), rng,
                           encoder=enc)
        for t in traj.transitions:
            x, y = t.state_index % 7, t.state_index // 7
            assert x < 4 and y < 4

    def test_random_walk_return_matches_markov_chain(self):
        # with eps = 1 at both levels the agent is a uniform random walker;
        # an exact absorbing-chain computation gives the expected return
        size, max_steps = 2, 40
        task = square_task(size, max_steps=max_steps)
        expected = _random_walk_expected_return(size, max_steps, RewardSpec())
        params = constant_agent(size * size)
        hp = HyperParams(eps_high=1.0, eps_option=1.0, eta=0.0)
        rng = np.random.default_rng(99)
        returns = [
            run_episode(params, task, hp, None, rng).cumulative_ext
            for _ in range(4000)
        ]
        assert np.mean(returns) == pytest.approx(expected, abs=0.15)


def _random_walk_expected_return(size, max_steps, spec):
    """Exact expected extrinsic return of a uniform random walk with
    boundary clipping, absorbing at the bottom-right goal."""
    goal = (size - 1, size - 1)
    cells = [(x, y) for y in range(size) for x in range(size) if (x, y) != goal]
    idx = {c: i for i, c in enumerate(cells)}
    moves = [(0, -1), (0, 1), (-1, 0), (1, 0)]
    transition = np.zeros((len(cells), len(cells)))
    to_goal = np.zeros(len(cells))
    for (x, y), i in idx.items():
        for dx, dy in moves:
            nx = min(max(x + dx, 0), size - 1)
            ny = min(max(y + dy, 0), size - 1)
            if (nx, ny) == goal:
                to_goal[i] += 0.25
            else:
                transition[idx[(nx, ny)], i] += 0.25
    dist = np.zeros(len(cells))
    dist[idx[(0, 0)]] = 1.0
    expected = 0.0
    for _ in range(max_steps):
        active = dist.sum()
        expected += active * spec.step_penalty
        expected += float(to_goal @ dist) * spec.goal_reward
        dist = transition @ dist
    return expected


class TestEvaluate:
    def test_scripted_policy_full_success(self, rng):
        task = square_task(4)

        def action_of_state(s):
            x, y = s % 4, s // 4
            return 3 if x < 3 else 1

        params = scripted_policy_agent(16, action_of_state)
        success, mean_return = evaluate(params, [task], n_episodes=5, rng=rng)
        assert success == 1.0
        assert mean_return == pytest.approx(6 * -0.1 + 10.0)

    def test_stuck_agent_zero_success(self, rng):
        params = constant_agent(16)
        success, mean_return = evaluate(params, [square_task(4, max_steps=20)],
                                        n_episodes=3, rng=rng)
        assert success == 0.0
        assert mean_return == pytest.approx(-2.0)

    def test_rejects_empty_inputs(self, rng):
        params = constant_agent(16)
        with pytest.raises(ValueError):
            evaluate(params, [], 1, rng)
        with pytest.raises(ValueError):
            evaluate(params, [square_task(4)], 0, rng)


class TestSegmentsAndFormatting:
    def test_segments_partition_trajectory(self):
        rng = np.random.default_rng(5)
        params = init_agent(25, rng)
        task = generate_task(
            CurriculumLevelSpec(level=2, grid_width=5, grid_height=5, n_traps=2),
            rng,
        )
        traj = run_episode(params, task, HyperParams(eps_option=0.8),
                           VisitCounts(), rng)
        segments = option_segments(traj)
        covered = [i for start, end, _ in segments for i in range(start, end)]
        assert covered == list(range(traj.length))
        for start, end, omega in segments:
            assert all(t.option == omega for t in traj.transitions[start:end])

    def test_format_trajectory_lines(self, rng):
        params = constant_agent(16)
        traj = run_episode(params, square_task(4, max_steps=5), HyperParams(),
                           None, rng)
        text = format_trajectory(traj)
        assert text.count("\n") == traj.length
        assert text.startswith("s=0 w=0 a=")
