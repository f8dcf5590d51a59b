import json

import pytest

from amslab.errors import BackendDown, DegenerateSpec, NoFeasiblePolarity
from amslab.nsga2 import GAConfig
from amslab.scoring import score, violation
from amslab.sim import EvalStatus, Evaluation, EvaluationCache
from amslab.sizing import (
    IdentificationResult,
    ParamSpace,
    SizingProblem,
    choose_polarity,
    identify,
    optimize,
)
from amslab.specs import CircuitClass, Direction, MetricSpec
from amslab.surrogates import SurrogateBackend

from conftest import DATA_DIR, build_deck

FEASIBLE_POINTS = json.loads((DATA_DIR / "feasible_points.json").read_text())

GAIN = MetricSpec("Gain", "dB", Direction.HIGHER_BETTER, 40, 80, gating=True)
POWER = MetricSpec("Power", "uW", Direction.LOWER_BETTER, 4.5, 0.5)
VO = MetricSpec("VO", "V", Direction.RANGE_TARGET, (1.5975, 1.6025), (1.5985, 1.6015), gating=True)


# --------------------------------------------------------------------------
# score rule

def test_score_threshold_is_sixty():
    assert score(40.0, GAIN) == pytest.approx(60.0, abs=1e-12)
    assert score(4.5, POWER) == pytest.approx(60.0, abs=1e-12)


def test_score_target_is_hundred():
    assert score(80.0, GAIN) == pytest.approx(100.0, abs=1e-12)
    assert score(0.5, POWER) == pytest.approx(100.0, abs=1e-12)


def test_score_linear_midpoint():
    assert score(60.0, GAIN) == pytest.approx(80.0, abs=1e-12)


def test_score_clamps():
    assert score(1000.0, GAIN) == 100.0
    assert score(-1000.0, GAIN) == 0.0


def test_score_below_threshold_slope():
    # one threshold-target span below threshold lands exactly at zero
    assert score(0.0, GAIN) == pytest.approx(0.0, abs=1e-12)
    assert score(20.0, GAIN) == pytest.approx(30.0, abs=1e-12)


def test_range_target_scores():
    assert score(1.6, VO) == 100.0
    assert score(1.5975, VO) == pytest.approx(60.0, abs=1e-9)
    assert score(1.6025, VO) == pytest.approx(60.0, abs=1e-9)
    assert score(1.5985, VO) == pytest.approx(100.0, abs=1e-9)
    assert score(1.5980, VO) == pytest.approx(80.0, abs=1e-9)
    assert 0.0 <= score(1.59, VO) <= 60.0


def test_degenerate_spec_rejected():
    bad = MetricSpec.__new__(MetricSpec)
    object.__setattr__(bad, "name", "X")
    object.__setattr__(bad, "unit", "")
    object.__setattr__(bad, "direction", Direction.HIGHER_BETTER)
    object.__setattr__(bad, "threshold", 1.0)
    object.__setattr__(bad, "target", 1.0)
    with pytest.raises(DegenerateSpec):
        score(1.0, bad)


def test_violation_direction_adjusted():
    assert violation(39.0, GAIN) == pytest.approx(1.0)
    assert violation(41.0, GAIN) == 0.0
    assert violation(5.0, POWER) == pytest.approx(0.5)
    assert violation(1.59, VO) == pytest.approx(0.0075)
    assert violation(1.61, VO) == pytest.approx(0.0075)


# --------------------------------------------------------------------------
# parameter space

def test_param_space_log_warping():
    space = ParamSpace.from_bounds({"ro": (1e4, 1e7), "v": (0.4, 1.4)})
    assert space.names == ("ro", "v")
    assert space.log_mask.tolist() == [True, False]
    decoded = space.decode(space.encode({"ro": 1e5, "v": 0.9}))
    assert decoded["ro"] == pytest.approx(1e5)
    assert decoded["v"] == pytest.approx(0.9)


# --------------------------------------------------------------------------
# identification

def _problem(name, cls, perm, budget, seed, **kw):
    deck = build_deck(name, cls, perm)
    return SizingProblem(deck, deck.spec_table, budget, seed, **kw)


def test_feasible_surrogate_accepted_across_seeds():
    backend = SurrogateBackend()
    for seed in (0, 1, 2):
        r = identify(_problem("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1, 200, seed),
                     backend, EvaluationCache())
        assert r.accepted
        assert r.first_feasible_trial is not None
        assert r.trials_used <= 200


def test_infeasible_surrogate_exhausts_budget():
    backend = SurrogateBackend()
    r = identify(_problem("ota_bad", CircuitClass.SINGLE_ENDED_OPAMP, 1, 200, 0),
                 backend, EvaluationCache())
    assert not r.accepted
    assert r.trials_used == 200
    assert r.first_feasible_trial is None


def test_budget_one_with_pinned_feasible_point():
    info = FEASIBLE_POINTS["ota-feasible"]
    backend = SurrogateBackend()
    problem = _problem(info["fixture"], CircuitClass(info["class"]), info["permutation"],
                       budget=1, seed=0, initial_point=info["params"])
    r = identify(problem, backend)
    assert r.accepted
    assert r.first_feasible_trial == 1
    assert r.trials_used == 1


def test_identify_deterministic_per_seed():
    backend = SurrogateBackend()
    a = identify(_problem("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1, 60, 5), backend)
    b = identify(_problem("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1, 60, 5), backend)
    assert a.records == b.records
    assert a.first_feasible_trial == b.first_feasible_trial


def test_worker_fanout_preserves_results():
    backend = SurrogateBackend()
    serial = identify(_problem("ota_bad", CircuitClass.SINGLE_ENDED_OPAMP, 1, 60, 5),
                      backend, workers=1)
    parallel = identify(_problem("ota_bad", CircuitClass.SINGLE_ENDED_OPAMP, 1, 60, 5),
                        backend, workers=4)
    assert serial.records == parallel.records


def test_pinned_point_must_cover_space():
    backend = SurrogateBackend()
    deck = build_deck("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1)
    problem = SizingProblem(deck, deck.spec_table, 1, 0, initial_point={"gm": 1e-3})
    from amslab.errors import ParamOutOfBounds

    with pytest.raises(ParamOutOfBounds):
        identify(problem, backend)


def test_backend_down_propagates():
    class DeadBackend:
        def space(self, deck):
            return {"x": (0.0, 1.0)}

        def run(self, deck, params):
            return Evaluation((), (), EvalStatus.SIM_FAILED, 0.0, "boom")

    deck = build_deck("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1)
    with pytest.raises(BackendDown):
        identify(SizingProblem(deck, deck.spec_table, 40, 0), DeadBackend())


# --------------------------------------------------------------------------
# optimization

def test_optimize_runs_exact_budget_and_returns_feasible_only():
    backend = SurrogateBackend()
    cache = EvaluationCache()
    calls = []
    real_run = backend.run

    def counting_run(deck, params):
        calls.append(1)
        return real_run(deck, params)

    backend.run = counting_run
    records = optimize(_problem("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1, 200, 3),
                       backend, cache)
    assert len(calls) + cache.hits == 200
    assert records
    assert all(r.feasible for r in records)
    assert all(0.0 <= v <= 100.0 for r in records for _, v in r.scores)


def test_optimize_bitwise_deterministic():
    backend = SurrogateBackend()
    a = optimize(_problem("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1, 120, 9), backend)
    b = optimize(_problem("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1, 120, 9), backend)
    assert a == b


def test_optimize_full_budget_feasible_floor():
    # empirical floor: the feasible surrogate yields far more than 50
    # feasible records over the extended budget (checked on two seeds here;
    # a single seed already clears the documented floor by orders of magnitude)
    backend = SurrogateBackend()
    total = 0
    for seed in (0, 1):
        records = optimize(_problem("ota5t_a", CircuitClass.SINGLE_ENDED_OPAMP, 1, 2000, seed),
                           backend, EvaluationCache())
        assert len(records) >= 50
        total += len(records)
    assert total >= 50


# --------------------------------------------------------------------------
# polarity choice

def _result(perm, first):
    return IdentificationResult("SingleEndedOpAmp", perm, first is not None, first,
                                trials_used=200)


def test_choose_polarity_fewest_trials_wins():
    winner = choose_polarity([_result(0, 43), _result(1, 17)])
    assert winner.permutation_index == 1


def test_choose_polarity_tie_breaks_to_lowest_index():
    winner = choose_polarity([_result(2, 9), _result(0, 9)])
    assert winner.permutation_index == 0


def test_choose_polarity_none_accepted():
    with pytest.raises(NoFeasiblePolarity):
        choose_polarity([_result(0, None), _result(1, None)])
    with pytest.raises(NoFeasiblePolarity):
        choose_polarity([])


def test_ga_population_default_matches_budget_granularity():
    assert GAConfig().population == 20
