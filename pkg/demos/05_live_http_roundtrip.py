"""Live-wire round trip: start the reference POS service on a local port with
an emulation profile, drive a short closed-loop load test against it over real
HTTP, and compare measured latency with the profile's injected latency.

This is the hermetic twin of the intended two-process workflow
(`posbench serve` in one terminal, `posbench run` against its URL in another).

Run:  python demos/05_live_http_roundtrip.py
"""

from collections import Counter

from posbench import (
    DEFAULT_MIX,
    IDENTITY_SHAPE,
    HttpTarget,
    LoadScenario,
    run_scenario,
    summarize,
)
from posbench.target import EmulationProfile, PosService, start_background
from posbench.workload import default_catalog

profile = EmulationProfile(
    name="demo-live",
    base_latency_ms=20.0,
    jitter_ms=6.0,
    capacity=64,
    error_rate=0.01,
    seed=5,
)
server, _ = start_background(profile, service=PosService())
print(f"reference target serving profile {profile.name!r} at {server.base_url}")

scenario = LoadScenario("mini-peak", 12, ramp_up_s=2, steady_s=6, repetitions=1, rest_between_runs_s=0)
target = HttpTarget("local", server.base_url)

try:
    run = run_scenario(scenario, default_catalog(), DEFAULT_MIX, IDENTITY_SHAPE, target, seed=21)
finally:
    server.shutdown()
    server.server_close()

summary = summarize(run)
outcomes = Counter(result.outcome.value for result in run.results)
print(f"\n{len(run.results)} requests from {scenario.concurrent_users} users over {scenario.duration_ms / 1000:.0f} s")
print(f"outcomes: {dict(outcomes)}")
print(f"steady-state p50={summary.p50_ms:.2f} ms  p95={summary.p95_ms:.2f} ms  p99={summary.p99_ms:.2f} ms")
print(f"tps={summary.tps:.1f}  error rate={summary.error_rate_pct:.2f}%  egress={summary.egress_bytes:,} bytes")
print(f"\ninjected base latency was {profile.base_latency_ms} ms ± {profile.jitter_ms} ms jitter;")
print("the measured p50 above sits a transport-overhead hair over the injected median.")
