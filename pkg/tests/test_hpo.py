import math
from statistics import StatisticsError

import numpy as np
import pytest

from gridmeta.agent import HyperParams
from gridmeta.curriculum import CurriculumLevelSpec, CurriculumSchedule
from gridmeta.hpo import (
    OBJECTIVE_WINDOW,
    ParamRange,
    TrialRecord,
    default_space,
    load_study,
    median_prune,
    sample_hyperparams,
    save_study,
    trial_objective,
    tune,
)
from gridmeta.metatrain import MetaConfig
from gridmeta.metrics import MetricsRecord


def make_records(avg_rewards, level=1):
    return [
        MetricsRecord(i + 1, 0.0, r, 0.0, level, 0.0)
        for i, r in enumerate(avg_rewards)
    ]


def base_config():
    schedule = CurriculumSchedule(
        levels=(CurriculumLevelSpec(level=1, grid_width=3, grid_height=3,
                                    n_traps=1),),
    )
    return MetaConfig(hp=HyperParams(), meta_iterations=20, schedule=schedule,
                      seed=5)


class TestParamRange:
    def test_validation(self):
        with pytest.raises(ValueError):
            ParamRange("gaussian", 0, 1)
        with pytest.raises(ValueError):
            ParamRange("uniform", 1, 0)
        with pytest.raises(ValueError):
            ParamRange("log", 0, 1)

    def test_uniform_bounds(self, rng):
        r = ParamRange("uniform", 0.2, 0.7)
        draws = [r.sample(rng) for _ in range(500)]
        assert all(0.2 <= d <= 0.7 for d in draws)

    def test_log_bounds_and_spread(self, rng):
        r = ParamRange("log", 1e-6, 1e-3)
        draws = np.array([r.sample(rng) for _ in range(2000)])
        assert draws.min() >= 1e-6 and draws.max() <= 1e-3
        # log-uniform: roughly a third of the mass per decade
        frac_low_decade = np.mean(draws < 1e-5)
        assert 0.25 < frac_low_decade < 0.42

    def test_int_endpoints_inclusive(self, rng):
        r = ParamRange("int", 1, 3)
        draws = {r.sample(rng) for _ in range(500)}
        assert draws == {1, 2, 3}
        assert all(isinstance(d, int) for d in draws)


class TestSampling:
    def test_unsampled_fields_keep_base(self, rng):
        space = {"alpha_inner": ParamRange("log", 1e-4, 1e-2)}
        base = HyperParams(gamma=0.9, eta=0.25)
        hp = sample_hyperparams(rng, space, base)
        assert hp.gamma == 0.9 and hp.eta == 0.25
        assert 1e-4 <= hp.alpha_inner <= 1e-2

    def test_same_seed_same_draw(self):
        space = default_space()
        a = sample_hyperparams(np.random.default_rng(3), space)
        b = sample_hyperparams(np.random.default_rng(3), space)
        assert a == b

    def test_empty_space_rejected(self, rng):
        with pytest.raises(ValueError):
            sample_hyperparams(rng, {})


class TestMedianPrune:
    def test_matches_independent_median_on_synthetic_histories(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            n = int(rng.integers(0, 12))
            step = int(rng.integers(1, 4)) * 10
            history = []
            for i in range(n):
                trial = TrialRecord(trial_id=i, hyperparams={})
                if rng.random() < 0.8:
                    trial.intermediates[step] = float(rng.normal())
                history.append(trial)
            value = float(rng.normal())
            min_completed = int(rng.integers(1, 7))
            got = median_prune(history, step, value, min_completed)
            reported = sorted(
                t.intermediates[step] for t in history if step in t.intermediates
            )
            if len(reported) < min_completed:
                expected = False
            else:
                expected = value < float(np.median(reported))
            assert got == expected

    def test_value_at_median_survives(self):
        history = []
        for i, v in enumerate([1.0, 2.0, 3.0, 4.0, 5.0]):
            t = TrialRecord(trial_id=i, hyperparams={})
            t.intermediates[10] = v
            history.append(t)
        assert not median_prune(history, 10, 3.0, min_completed=5)
        assert median_prune(history, 10, 2.999, min_completed=5)

    def test_too_few_reports_never_prunes(self):
        assert not median_prune([], 10, -1e9, min_completed=5)


class TestObjective:
    def test_mean_of_final_window(self):
        records = make_records(list(range(25)))
        assert trial_objective(records) == pytest.approx(
            sum(range(15, 25)) / OBJECTIVE_WINDOW
        )

    def test_requires_full_window(self):
        with pytest.raises(ValueError):
            trial_objective(make_records([0.0] * (OBJECTIVE_WINDOW - 1)))


def quality_runner(quality_of):
    """Deterministic fake training: a trial's avg_reward is a pure function
    of its hyperparameters, reported at steps 10 and 20."""

    def run(config, report):
        q = quality_of(config.hp)
        records = []
        for i in range(1, 21):
            records.append(MetricsRecord(i, 0.0, q, 0.0, 1, 0.0))
            if i % 10 == 0 and report(i, trial_objective(records)):
                break
        return records

    return run


class TestTune:
    def test_without_pruning_returns_exhaustive_argmax(self):
        runner = quality_runner(lambda hp: -abs(hp.alpha_inner - 0.003))
        best_hp, study = tune(8, base_config(), runner=runner, pruning=False,
                              seed=11)
        assert all(t.status == "complete" for t in study)
        best_trial = max(study, key=lambda t: t.final_objective)
        assert best_hp.alpha_inner == pytest.approx(
            best_trial.hyperparams["alpha_inner"]
        )
        assert best_trial.final_objective == pytest.approx(
            -abs(best_hp.alpha_inner - 0.003)
        )

    def test_pruning_cuts_weak_trials_and_keeps_best(self):
        runner = quality_runner(lambda hp: hp.eta)
        best_hp, study = tune(12, base_config(), runner=runner, pruning=True,
                              min_completed=3, seed=19)
        pruned = [t for t in study if t.status == "pruned"]
        complete = [t for t in study if t.status == "complete"]
        assert pruned and complete
        assert all(t.final_objective is None for t in pruned)
        # the returned best dominates every completed trial
        best = max(complete, key=lambda t: t.final_objective)
        assert best_hp.eta == pytest.approx(best.hyperparams["eta"])
        # no pruned trial ever reported above the best completed objective
        assert all(t.best_intermediate() <= best.final_objective for t in pruned)

    def test_same_seed_same_study(self):
        runner = quality_runner(lambda hp: hp.eta)
        _, a = tune(5, base_config(), runner=runner, seed=23)
        _, b = tune(5, base_config(), runner=runner, seed=23)
        assert [t.hyperparams for t in a] == [t.hyperparams for t in b]

    def test_parallel_workers_same_draws(self):
        runner = quality_runner(lambda hp: hp.eta)
        _, a = tune(6, base_config(), runner=runner, seed=29, pruning=False)
        _, b = tune(6, base_config(), runner=runner, seed=29, pruning=False,
                    parallel_workers=3)
        assert [t.hyperparams for t in a] == [t.hyperparams for t in b]
        assert [t.final_objective for t in a] == [t.final_objective for t in b]

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            tune(0, base_config())

    def test_real_training_trial_smoke(self):
        # one real (tiny) meta-training trial end to end
        config = MetaConfig(
            hp=HyperParams(inner_steps=1, tasks_per_meta_batch=1),
            meta_iterations=OBJECTIVE_WINDOW,
            schedule=base_config().schedule,
            seed=5,
            max_steps=20,
            validation_episodes=1,
            eval_episodes_per_task=1,
        )
        space = {"eta": ParamRange("uniform", 0.0, 0.2)}
        best_hp, study = tune(1, config, space=space, seed=1, pruning=False)
        assert study[0].status == "complete"
        assert math.isfinite(study[0].final_objective)
        assert 0.0 <= best_hp.eta <= 0.2


class TestStudyPersistence:
    def test_round_trip(self, tmp_path):
        runner = quality_runner(lambda hp: hp.eta)
        path = tmp_path / "study.jsonl"
        _, study = tune(4, base_config(), runner=runner, seed=31,
                        study_path=path)
        loaded = load_study(path)
        assert len(loaded) == 4
        for orig, back in zip(study, loaded):
            assert back.trial_id == orig.trial_id
            assert back.status == orig.status
            assert back.intermediates == orig.intermediates
            assert back.final_objective == orig.final_objective
