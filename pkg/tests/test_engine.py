"""Engine tests: ramp schedule, outcome classification, deterministic simulated
execution, forced timeouts, campaign orchestration, and raw CSV persistence."""

import math
from collections import defaultdict

import pytest

from posbench.engine import (
    CANONICAL_LEVEL_ORDER,
    EmulatedTarget,
    HttpTarget,
    LoadScenario,
    Outcome,
    TargetUnreachable,
    canonical_scenarios,
    classify_outcome,
    desk_scale,
    execute_campaign,
    ramp_schedule,
    read_results_csv,
    run_scenario,
    write_results_csv,
)
from posbench.target.emulation import EmulationProfile
from posbench.workload import DEFAULT_MIX, IDENTITY_SHAPE, default_catalog

ZERO = EmulationProfile(name="zero")
FLAT_150 = EmulationProfile(name="flat", base_latency_ms=150.0, capacity=1_000)


def mini_scenario(users=5, ramp=2.0, steady=5.0, reps=1, rest=0.0, **kw):
    return LoadScenario("mini", users, ramp_up_s=ramp, steady_s=steady, repetitions=reps, rest_between_runs_s=rest, **kw)


def simulate(scenario, profile=FLAT_150, seed=7, label="sim"):
    return run_scenario(scenario, default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, EmulatedTarget(label, profile), seed)


class TestRampSchedule:
    def test_endpoint_reaches_all_users(self):
        active = ramp_schedule(LoadScenario("x", 10, ramp_up_s=60))
        assert active(60) == 10

    def test_midpoint(self):
        active = ramp_schedule(LoadScenario("x", 10, ramp_up_s=60))
        assert active(30) == 5

    def test_hundred_users_six_seconds(self):
        active = ramp_schedule(LoadScenario("x", 100, ramp_up_s=60))
        assert active(6) == 10

    def test_zero_is_zero(self):
        active = ramp_schedule(LoadScenario("x", 10, ramp_up_s=60))
        assert active(0) == 0

    def test_zero_ramp_starts_everyone_immediately(self):
        active = ramp_schedule(LoadScenario("x", 10, ramp_up_s=0))
        assert active(0) == 0
        assert active(0.001) == 10

    def test_monotone_and_ceiling(self):
        scenario = LoadScenario("x", 37, ramp_up_s=61)
        active = ramp_schedule(scenario)
        previous = 0
        for i in range(0, 4_000):
            t = i * 0.1
            now = active(t)
            assert now >= previous
            assert now <= 37
            if 0 < t <= 61:
                assert now == math.ceil(37 * t / 61)
            previous = now
        assert active(61) == 37


class TestClassifyOutcome:
    @pytest.mark.parametrize(
        "signal,elapsed,timeout,expected",
        [
            (200, 150.0, 10_000.0, Outcome.SUCCESS),
            (201, 1.0, 10_000.0, Outcome.SUCCESS),
            (299, 1.0, 10_000.0, Outcome.SUCCESS),
            (503, 80.0, 10_000.0, Outcome.HTTP_ERROR),
            (404, 80.0, 10_000.0, Outcome.HTTP_ERROR),
            (301, 10.0, 10_000.0, Outcome.HTTP_ERROR),  # redirects are not followed
            (None, 10_000.0, 10_000.0, Outcome.TIMEOUT),  # boundary: elapsed == timeout
            (200, 10_001.0, 10_000.0, Outcome.TIMEOUT),
            ("timeout", 5.0, 10_000.0, Outcome.TIMEOUT),
            ("transport", 5.0, 10_000.0, Outcome.TRANSPORT_ERROR),
            (None, 5.0, 10_000.0, Outcome.TRANSPORT_ERROR),
        ],
    )
    def test_classification_table(self, signal, elapsed, timeout, expected):
        assert classify_outcome(signal, elapsed, timeout) is expected

    def test_total_over_status_codes(self):
        for status in range(100, 600):
            assert classify_outcome(status, 1.0, 1_000.0) in (Outcome.SUCCESS, Outcome.HTTP_ERROR)


class TestSimulatedRun:
    def test_duration_bound_and_nonempty(self):
        run = simulate(LoadScenario("baseline", 10, ramp_up_s=60, steady_s=30, repetitions=1), profile=FLAT_150)
        assert len(run.results) > 0
        assert all(r.start_offset_ms < 90_000 for r in run.results)

    def test_identical_seeds_identical_sequences(self):
        """Same seed, zero-latency deterministic target: identical per-user op sequences."""
        scenario = mini_scenario(users=4, ramp=1, steady=3)
        run_a = simulate(scenario, profile=ZERO, seed=33)
        run_b = simulate(scenario, profile=ZERO, seed=33)
        per_user_a = defaultdict(list)
        per_user_b = defaultdict(list)
        for r in run_a.results:
            per_user_a[r.user_index].append(r.operation_name)
        for r in run_b.results:
            per_user_b[r.user_index].append(r.operation_name)
        assert per_user_a == per_user_b
        assert run_a.results == run_b.results

    def test_different_seeds_differ(self):
        scenario = mini_scenario(users=4, ramp=1, steady=3)
        names_a = [r.operation_name for r in simulate(scenario, profile=ZERO, seed=1).results]
        names_b = [r.operation_name for r in simulate(scenario, profile=ZERO, seed=2).results]
        assert names_a != names_b

    def test_forced_timeout_oracle(self):
        """timeout_ms=1 against a 150 ms base-latency profile times every request out."""
        scenario = mini_scenario(users=3, ramp=0, steady=2, request_timeout_ms=1.0)
        run = simulate(scenario, profile=FLAT_150)
        assert len(run.results) > 0
        assert all(r.outcome is Outcome.TIMEOUT for r in run.results)
        assert all(r.latency_ms >= scenario.request_timeout_ms for r in run.results)
        assert all(r.status_code is None for r in run.results)

    def test_closed_loop_no_overlap_per_user(self):
        """Per-user request intervals [start, start+latency] never overlap."""
        scenario = mini_scenario(users=6, ramp=1, steady=4, request_timeout_ms=120.0)
        run = simulate(scenario, profile=EmulationProfile(name="jittery", base_latency_ms=40.0, jitter_ms=35.0, capacity=2, saturation_gain=3.0, seed=2))
        per_user = defaultdict(list)
        for r in run.results:
            per_user[r.user_index].append(r)
        assert any(r.outcome is Outcome.TIMEOUT for r in run.results)  # saturation above knee
        for results in per_user.values():
            for first, second in zip(results, results[1:]):
                assert first.start_offset_ms + first.latency_ms <= second.start_offset_ms + 1e-6

    def test_all_users_participate(self):
        run = simulate(mini_scenario(users=10, ramp=2, steady=4))
        assert {r.user_index for r in run.results} == set(range(10))

    def test_success_statuses_in_2xx(self):
        scenario = mini_scenario(users=3, ramp=0, steady=2)
        run = simulate(scenario)
        for r in run.results:
            if r.outcome is Outcome.SUCCESS:
                assert 200 <= r.status_code <= 299
            if r.outcome is Outcome.TIMEOUT:
                assert r.latency_ms >= scenario.request_timeout_ms

    def test_error_injection_shows_up_as_http_errors(self):
        profile = EmulationProfile(name="flaky", base_latency_ms=1.0, capacity=100, error_rate=0.3, seed=11)
        run = simulate(mini_scenario(users=4, ramp=0, steady=3), profile=profile)
        outcomes = {r.outcome for r in run.results}
        assert Outcome.HTTP_ERROR in outcomes and Outcome.SUCCESS in outcomes
        assert all(r.status_code == 500 for r in run.results if r.outcome is Outcome.HTTP_ERROR)

    def test_think_time_reduces_request_count(self):
        fast = simulate(mini_scenario(users=2, ramp=0, steady=3), profile=FLAT_150)
        slow = simulate(mini_scenario(users=2, ramp=0, steady=3, think_time_ms=400.0), profile=FLAT_150)
        assert len(slow.results) < len(fast.results)

    def test_cold_start_after_idle_gap(self):
        """A think-time gap above the idle threshold draws the cold penalty once."""
        profile = EmulationProfile(name="coldish", base_latency_ms=10.0, capacity=100, cold_idle_threshold_s=1.0, cold_penalty_ms=5_000.0)
        scenario = mini_scenario(users=1, ramp=0, steady=8, think_time_ms=2_000.0)
        run = simulate(scenario, profile=profile)
        cold = [r for r in run.results if r.latency_ms >= 5_000.0]
        warm = [r for r in run.results if r.latency_ms < 5_000.0]
        assert cold and warm
        assert run.results[0].latency_ms == pytest.approx(10.0)  # first request is warm at t=0


class TestExecuteCampaign:
    def test_canonical_grid_yields_twelve_runs(self):
        scenarios = [desk_scale(s) for s in canonical_scenarios()]
        # Shrink further so the grid stays fast; repetitions stay at 3.
        scenarios = [
            LoadScenario(s.name, max(2, s.concurrent_users // 10), ramp_up_s=1, steady_s=2, repetitions=3, rest_between_runs_s=5)
            for s in scenarios
        ]
        campaign = execute_campaign(scenarios, default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, EmulatedTarget("sim", FLAT_150), seed=5)
        assert len(campaign.runs) == 12
        assert [r.run_id for r in campaign.runs[:3]] == ["sim-baseline-r1", "sim-baseline-r2", "sim-baseline-r3"]

    def test_single_run_no_rest(self):
        campaign = execute_campaign([mini_scenario()], default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, EmulatedTarget("sim", FLAT_150), seed=5)
        assert len(campaign.runs) == 1

    def test_seed_derivation_by_ordinal(self):
        scenarios = [mini_scenario(reps=2)]
        campaign = execute_campaign(scenarios, default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, EmulatedTarget("sim", FLAT_150), seed=100)
        assert [r.seed for r in campaign.runs] == [100, 101]

    def test_rest_visible_in_run_timestamps(self):
        """Inter-run idle of at least rest_between_runs_s, measured by start timestamps."""
        scenario = mini_scenario(ramp=1, steady=2, reps=3, rest=2.0)
        campaign = execute_campaign([scenario], default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, EmulatedTarget("sim", FLAT_150), seed=5)
        gaps = [
            (later.started_at - earlier.started_at).total_seconds()
            for earlier, later in zip(campaign.runs, campaign.runs[1:])
        ]
        duration = scenario.ramp_up_s + scenario.steady_s
        assert all(gap >= duration + 2.0 for gap in gaps)

    def test_empty_scenarios_rejected(self):
        with pytest.raises(ValueError):
            execute_campaign([], default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, EmulatedTarget("sim", FLAT_150), seed=5)

    def test_partial_persistence(self, tmp_path):
        scenario = mini_scenario(ramp=0, steady=1, reps=2)
        execute_campaign([scenario], default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, EmulatedTarget("sim", FLAT_150), seed=5, persist_dir=tmp_path)
        assert (tmp_path / "sim-campaign.json").exists()
        assert (tmp_path / "raw_sim-mini-r1.csv").exists()
        assert (tmp_path / "raw_sim-mini-r2.csv").exists()


class TestDeskScale:
    def test_rescales_durations_only(self):
        for scenario in canonical_scenarios():
            scaled = desk_scale(scenario)
            assert scaled.steady_s == 30.0
            assert scaled.rest_between_runs_s == 2.0
            assert scaled.repetitions == 1
            assert scaled.concurrent_users == scenario.concurrent_users
            assert scaled.ramp_up_s == scenario.ramp_up_s

    def test_canonical_parameters(self):
        scenarios = canonical_scenarios()
        assert [s.concurrent_users for s in scenarios] == [10, 25, 50, 100]
        assert [s.name for s in scenarios] == list(CANONICAL_LEVEL_ORDER)
        for s in scenarios:
            assert s.ramp_up_s == 60 and s.steady_s == 300 and s.repetitions == 3 and s.rest_between_runs_s == 300


class TestPersistence:
    def test_raw_csv_round_trip(self, tmp_path):
        run = simulate(mini_scenario(users=3, ramp=1, steady=2), profile=FLAT_150, seed=9)
        path = tmp_path / "raw.csv"
        write_results_csv(run, path)
        header = path.read_text().splitlines()[0]
        assert header == "run_id,scenario,target_label,user_index,operation,category,start_offset_ms,latency_ms,outcome,status_code,bytes_out,bytes_in"
        loaded, warnings = read_results_csv(path)
        assert warnings == 0
        assert len(loaded) == len(run.results)
        for original, parsed in zip(run.results, loaded):
            assert parsed.operation_name == original.operation_name
            assert parsed.outcome is original.outcome
            assert parsed.start_offset_ms == pytest.approx(original.start_offset_ms, abs=1e-3)
            assert parsed.bytes_in == original.bytes_in

    def test_corrupted_rows_skipped_and_counted(self, tmp_path):
        run = simulate(mini_scenario(users=2, ramp=0, steady=2), seed=9)
        path = tmp_path / "raw.csv"
        write_results_csv(run, path)
        lines = path.read_text().splitlines()
        lines.insert(2, "garbage,row")
        lines.insert(4, lines[1].replace("Success", "Exploded", 1))
        path.write_text("\n".join(lines) + "\n")
        loaded, warnings = read_results_csv(path)
        assert warnings == 2  # both injected bad rows skipped
        assert len(loaded) == len(run.results)  # every genuine row survives

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_results_csv(path)


class TestThreadedRun:
    def test_unreachable_target_raises(self):
        scenario = mini_scenario(users=1, ramp=0, steady=1)
        target = HttpTarget("dead", "http://127.0.0.1:1")
        with pytest.raises(TargetUnreachable):
            run_scenario(scenario, default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, target, seed=1)

    def test_live_run_against_local_server(self):
        from posbench.target.httpd import start_background
        from posbench.target.service import PosService

        # Default fixture: sessions draw product ids from the same 1..1000 universe.
        profile = EmulationProfile(name="fast", base_latency_ms=2.0, capacity=100)
        server, _ = start_background(profile, service=PosService())
        try:
            scenario = mini_scenario(users=5, ramp=1, steady=3)
            target = HttpTarget("live", server.base_url)
            run = run_scenario(scenario, default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, target, seed=3)
            assert len(run.results) > 0
            assert all(r.start_offset_ms < scenario.duration_ms for r in run.results)
            assert sum(1 for r in run.results if r.outcome is Outcome.SUCCESS) / len(run.results) > 0.95
            per_user = defaultdict(list)
            for r in run.results:
                per_user[r.user_index].append(r)
            for results in per_user.values():
                for first, second in zip(results, results[1:]):
                    assert first.start_offset_ms + first.latency_ms <= second.start_offset_ms + 1.0
        finally:
            server.shutdown()
            server.server_close()

    def test_sustains_100_concurrent_loops(self):
        from posbench.target.httpd import start_background
        from posbench.target.service import PosService

        profile = EmulationProfile(name="hundred", base_latency_ms=100.0, capacity=200)
        server, _ = start_background(profile, service=PosService())
        try:
            scenario = LoadScenario("century", 100, ramp_up_s=1, steady_s=3, repetitions=1, rest_between_runs_s=0)
            target = HttpTarget("live", server.base_url)
            run = run_scenario(scenario, default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, target, seed=8)
            assert {r.user_index for r in run.results} == set(range(100))
            assert sum(1 for r in run.results if r.outcome is Outcome.SUCCESS) / len(run.results) > 0.95
        finally:
            server.shutdown()
            server.server_close()

    def test_live_rest_between_runs(self):
        from posbench.target.httpd import start_background
        from posbench.target.service import PosService

        profile = EmulationProfile(name="fast", base_latency_ms=1.0, capacity=100)
        server, _ = start_background(profile, service=PosService(product_count=5))
        try:
            scenario = mini_scenario(users=2, ramp=0, steady=1, reps=2, rest=1.0)
            target = HttpTarget("live", server.base_url)
            campaign = execute_campaign([scenario], default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, target, seed=3)
            gap = (campaign.runs[1].started_at - campaign.runs[0].started_at).total_seconds()
            assert gap >= scenario.steady_s + 1.0
        finally:
            server.shutdown()
            server.server_close()
