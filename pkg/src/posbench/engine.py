"""Closed-loop load engine: virtual users per a linear ramp schedule, one
request in flight per user, outcomes classified and recorded per request.

Two executors share the per-user sampling/session logic:

* emulated targets run on a discrete-event simulated clock with the profile's
  injected delay recorded as the latency — fully deterministic by seed;
* live ``base_url`` targets run one thread per user over real HTTP/1.1
  keep-alive connections with wall-clock latencies.
"""

from __future__ import annotations

import csv
import heapq
import http.client
import itertools
import json
import math
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence
from urllib.parse import urlsplit

from .target.emulation import EmulationProfile, inject_error, inject_latency
from .target.service import PosService
from .workload import (
    DEFAULT_WALL_ANCHOR,
    PRNG_ALGORITHM,
    SERVICE_STREAM,
    OperationSpec,
    TrafficShape,
    WorkloadMix,
    build_request,
    make_rng,
    sample_operation,
    session_for_user,
    shape_multiplier,
)

DEFAULT_TIMEOUT_MS = 10_000

# Floor on a simulated user's issue-to-issue advance. Keeps zero-latency
# profiles finite (a closed loop with zero service time and zero think time
# would otherwise never advance the simulated clock) and stands in for the
# client-side turnaround every real user loop pays.
MIN_TURNAROUND_MS = 1.0

RAW_COLUMNS = [
    "run_id",
    "scenario",
    "target_label",
    "user_index",
    "operation",
    "category",
    "start_offset_ms",
    "latency_ms",
    "outcome",
    "status_code",
    "bytes_out",
    "bytes_in",
]

_INJECTED_ERROR_BODY = json.dumps({"code": "injected_error", "message": "emulated platform failure"}).encode("ascii")


class TargetUnreachable(ConnectionError):
    """The pre-run connectivity probe got no HTTP response at all."""


class Outcome(str, Enum):
    SUCCESS = "Success"
    HTTP_ERROR = "HttpError"
    TIMEOUT = "Timeout"
    TRANSPORT_ERROR = "TransportError"


@dataclass(frozen=True)
class LoadScenario:
    """One progressive-load level: fixed user count, linear ramp, steady window."""

    name: str
    concurrent_users: int
    ramp_up_s: float = 60.0
    steady_s: float = 300.0
    repetitions: int = 3
    rest_between_runs_s: float = 300.0
    request_timeout_ms: float = DEFAULT_TIMEOUT_MS
    think_time_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.concurrent_users < 1:
            raise ValueError("concurrent_users must be positive")
        if self.steady_s <= 0:
            raise ValueError("steady_s must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        if self.ramp_up_s < 0 or self.rest_between_runs_s < 0 or self.think_time_ms < 0:
            raise ValueError("durations must be non-negative")
        if self.request_timeout_ms <= 0:
            raise ValueError("request_timeout_ms must be positive")

    @property
    def duration_ms(self) -> float:
        return (self.ramp_up_s + self.steady_s) * 1000.0


def canonical_scenarios() -> list[LoadScenario]:
    """The four standard levels: 10/25/50/100 users, 1-min ramp, 5-min steady, 3 runs."""
    return [
        LoadScenario("baseline", 10),
        LoadScenario("typical", 25),
        LoadScenario("peak", 50),
        LoadScenario("stress", 100),
    ]


CANONICAL_LEVEL_ORDER = ("baseline", "typical", "peak", "stress")


def desk_scale(scenario: LoadScenario) -> LoadScenario:
    """CI-speed variant: 30 s steady, 2 s rest, single repetition; users and mix untouched."""
    return replace(scenario, steady_s=30.0, rest_between_runs_s=2.0, repetitions=1)


@dataclass(slots=True)
class RequestResult:
    run_id: str
    user_index: int
    operation_name: str
    category: str
    start_offset_ms: float
    latency_ms: float
    outcome: Outcome
    status_code: int | None
    bytes_out: int
    bytes_in: int


@dataclass
class RunRecord:
    run_id: str
    scenario: LoadScenario
    target_label: str
    seed: int
    started_at: datetime
    results: list[RequestResult] = field(default_factory=list)
    prng: str = PRNG_ALGORITHM


@dataclass
class CampaignRecord:
    target_label: str
    seed: int
    runs: list[RunRecord] = field(default_factory=list)
    prng: str = PRNG_ALGORITHM


@dataclass(frozen=True)
class HttpTarget:
    """A live endpoint; the optional bearer token is read from the named env var."""

    label: str
    base_url: str
    token_env: str = "POSBENCH_TOKEN"


@dataclass(frozen=True)
class EmulatedTarget:
    """A hermetic in-process target driven by an emulation profile."""

    label: str
    profile: EmulationProfile


Target = HttpTarget | EmulatedTarget


def ramp_schedule(scenario: LoadScenario) -> Callable[[float], int]:
    """Active-user count as a function of elapsed seconds: linear ramp with ceiling."""
    users = scenario.concurrent_users
    ramp = scenario.ramp_up_s

    def active(t: float) -> int:
        if t <= 0:
            return 0
        if ramp <= 0 or t > ramp:
            return users
        return min(users, math.ceil(users * t / ramp))

    return active


def classify_outcome(signal: int | str | None, elapsed_ms: float, timeout_ms: float) -> Outcome:
    """Total classification: timeout, then transport failure, then status bands.

    ``signal`` is an HTTP status code, "timeout", "transport", or None (no
    response). Redirects are not followed, so 3xx counts as an error.
    """
    if elapsed_ms >= timeout_ms or signal == "timeout":
        return Outcome.TIMEOUT
    if signal is None or signal == "transport":
        return Outcome.TRANSPORT_ERROR
    if 200 <= int(signal) <= 299:
        return Outcome.SUCCESS
    return Outcome.HTTP_ERROR


def _user_start_offsets_ms(scenario: LoadScenario) -> list[float]:
    # User k goes active the instant ceil(users * t / ramp) first reaches k+1.
    users = scenario.concurrent_users
    ramp_ms = scenario.ramp_up_s * 1000.0
    return [ramp_ms * k / users for k in range(users)]


def run_scenario(
    scenario: LoadScenario,
    catalog: list[OperationSpec],
    mix: WorkloadMix,
    shape: TrafficShape,
    target: Target,
    seed: int,
    run_id: str | None = None,
    started_at: datetime | None = None,
) -> RunRecord:
    """Execute one closed-loop run against a live or emulated target."""
    run_id = run_id or f"{target.label}-{scenario.name}"
    if isinstance(target, EmulatedTarget):
        return _run_simulated(scenario, catalog, mix, shape, target, seed, run_id, started_at or DEFAULT_WALL_ANCHOR)
    return _run_threaded(scenario, catalog, mix, shape, target, seed, run_id)


# --- simulated executor ---------------------------------------------------------

_EVT_RELEASE = 0  # server slot frees; processed before same-instant arrivals
_EVT_ISSUE = 1


def _run_simulated(
    scenario: LoadScenario,
    catalog: list[OperationSpec],
    mix: WorkloadMix,
    shape: TrafficShape,
    target: EmulatedTarget,
    seed: int,
    run_id: str,
    started_at: datetime,
) -> RunRecord:
    profile = target.profile
    duration_ms = scenario.duration_ms
    timeout_ms = scenario.request_timeout_ms
    epoch = started_at.timestamp()
    sim_now_ms = [0.0]
    service = PosService(now_fn=lambda: epoch + sim_now_ms[0] / 1000.0)
    svc_rng = make_rng(seed, SERVICE_STREAM + profile.seed)
    users = [
        (make_rng(seed, k), session_for_user(catalog, k, product_count=len(service.products)))
        for k in range(scenario.concurrent_users)
    ]

    results: list[RequestResult] = []
    issued = 0
    in_flight = 0
    last_activity_ms = 0.0
    seq = itertools.count()
    heap: list[tuple[float, int, int, int]] = []
    for k, offset_ms in enumerate(_user_start_offsets_ms(scenario)):
        heapq.heappush(heap, (offset_ms, _EVT_ISSUE, next(seq), k))

    while heap:
        t, kind, _, user_index = heapq.heappop(heap)
        if kind == _EVT_RELEASE:
            in_flight -= 1
            last_activity_ms = max(last_activity_ms, t)
            continue
        if t >= duration_ms:
            continue  # the run is over; this user retires

        rng, session = users[user_index]
        spec = sample_operation(catalog, mix, rng)
        descriptor = build_request(spec, session, rng)

        idle_gap_s = (t - last_activity_ms) / 1000.0
        in_flight += 1
        last_activity_ms = t
        sim_now_ms[0] = t
        if inject_error(profile, svc_rng):
            status, body = 500, _INJECTED_ERROR_BODY
        else:
            status, body = service.dispatch(descriptor.method, descriptor.path, descriptor.body)
        delay_ms = inject_latency(profile, in_flight, idle_gap_s, svc_rng)
        # The server slot stays occupied for the full injected delay even when
        # the client gives up at the timeout.
        heapq.heappush(heap, (t + delay_ms, _EVT_RELEASE, next(seq), user_index))

        if delay_ms >= timeout_ms:
            outcome = Outcome.TIMEOUT
            latency_ms = float(timeout_ms)
            recorded_status: int | None = None
            bytes_in = 0
        else:
            outcome = classify_outcome(status, delay_ms, timeout_ms)
            latency_ms = delay_ms
            recorded_status = status
            bytes_in = len(body)
            if outcome is Outcome.SUCCESS:
                session.observe_response(descriptor, status, body)

        results.append(
            RequestResult(
                run_id=run_id,
                user_index=user_index,
                operation_name=descriptor.operation.name,
                category=descriptor.operation.category.value,
                start_offset_ms=t,
                latency_ms=latency_ms,
                outcome=outcome,
                status_code=recorded_status,
                bytes_out=descriptor.bytes_out,
                bytes_in=bytes_in,
            )
        )
        issued += 1

        resume_ms = t + latency_ms
        think_ms = scenario.think_time_ms
        if think_ms > 0:
            think_ms /= shape_multiplier(shape, resume_ms / 1000.0, started_at)
        next_issue_ms = max(resume_ms + think_ms, t + MIN_TURNAROUND_MS)
        heapq.heappush(heap, (next_issue_ms, _EVT_ISSUE, next(seq), user_index))

    if issued != len(results):
        raise AssertionError(f"issue counter {issued} != recorded results {len(results)}")
    results.sort(key=lambda r: (r.start_offset_ms, r.user_index))
    return RunRecord(run_id=run_id, scenario=scenario, target_label=target.label, seed=seed, started_at=started_at, results=results)


# --- threaded executor ---------------------------------------------------------


class _HttpClient:
    """One keep-alive HTTP/1.1 connection owned by a single virtual user."""

    def __init__(self, base_url: str, timeout_s: float, headers: dict[str, str]):
        split = urlsplit(base_url)
        if split.scheme not in ("http", "https"):
            raise ValueError(f"unsupported scheme in {base_url!r}")
        self._https = split.scheme == "https"
        self._host = split.hostname or "127.0.0.1"
        self._port = split.port
        self._prefix = split.path.rstrip("/")
        self._timeout = timeout_s
        self._headers = headers
        self._conn: http.client.HTTPConnection | None = None

    def _connect(self) -> http.client.HTTPConnection:
        if self._conn is None:
            cls = http.client.HTTPSConnection if self._https else http.client.HTTPConnection
            self._conn = cls(self._host, self._port, timeout=self._timeout)
        return self._conn

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def request(self, method: str, path: str, body: bytes) -> tuple[int | None, bytes, str | None]:
        """Returns (status, body, signal) with signal in {None, "timeout", "transport"}."""
        headers = dict(self._headers)
        if body:
            headers["Content-Type"] = "application/json"
        for attempt in (1, 2):
            try:
                conn = self._connect()
                conn.request(method, self._prefix + path, body=body or None, headers=headers)
                response = conn.getresponse()
                data = response.read()
                return response.status, data, None
            except TimeoutError:
                self.close()
                return None, b"", "timeout"
            except (http.client.RemoteDisconnected, http.client.BadStatusLine):
                # Stale keep-alive socket: reconnect once, then count it as a
                # transport failure.
                self.close()
                if attempt == 2:
                    return None, b"", "transport"
            except (http.client.HTTPException, OSError):
                self.close()
                return None, b"", "transport"
        return None, b"", "transport"


def probe_target(base_url: str, headers: dict[str, str] | None = None, timeout_s: float = 5.0) -> None:
    """Raise TargetUnreachable unless the target answers /healthz with any HTTP status."""
    request = urllib.request.Request(base_url.rstrip("/") + "/healthz", headers=headers or {})
    try:
        with urllib.request.urlopen(request, timeout=timeout_s):
            pass
    except urllib.error.HTTPError:
        return  # an HTTP response, even an error, means the target is up
    except (urllib.error.URLError, OSError) as exc:
        raise TargetUnreachable(f"probe of {base_url!r} failed: {exc}") from exc


def _run_threaded(
    scenario: LoadScenario,
    catalog: list[OperationSpec],
    mix: WorkloadMix,
    shape: TrafficShape,
    target: HttpTarget,
    seed: int,
    run_id: str,
) -> RunRecord:
    headers: dict[str, str] = {}
    token = os.environ.get(target.token_env) if target.token_env else None
    if token:
        headers["Authorization"] = f"Bearer {token}"
    probe_target(target.base_url, headers)

    started_at = datetime.now(timezone.utc)
    duration_ms = scenario.duration_ms
    timeout_ms = scenario.request_timeout_ms
    t0 = time.perf_counter()
    sink_lock = threading.Lock()
    results: list[RequestResult] = []
    issued = [0]
    worker_failures: list[Exception] = []

    def worker(user_index: int, start_offset_ms: float) -> None:
        rng = make_rng(seed, user_index)
        session = session_for_user(catalog, user_index)
        client = _HttpClient(target.base_url, timeout_ms / 1000.0, headers)
        delay_s = start_offset_ms / 1000.0 - (time.perf_counter() - t0)
        if delay_s > 0:
            time.sleep(delay_s)
        try:
            while True:
                issue_t = time.perf_counter()
                offset_ms = (issue_t - t0) * 1000.0
                if offset_ms >= duration_ms:
                    break
                spec = sample_operation(catalog, mix, rng)
                descriptor = build_request(spec, session, rng)
                status, body, signal = client.request(descriptor.method, descriptor.path, descriptor.body)
                elapsed_ms = (time.perf_counter() - issue_t) * 1000.0
                if signal == "timeout":
                    outcome = Outcome.TIMEOUT
                    latency_ms = max(elapsed_ms, float(timeout_ms))
                else:
                    outcome = classify_outcome(signal if signal else status, elapsed_ms, timeout_ms)
                    latency_ms = elapsed_ms
                if outcome is Outcome.SUCCESS and status is not None:
                    session.observe_response(descriptor, status, body)
                result = RequestResult(
                    run_id=run_id,
                    user_index=user_index,
                    operation_name=descriptor.operation.name,
                    category=descriptor.operation.category.value,
                    start_offset_ms=offset_ms,
                    latency_ms=latency_ms,
                    outcome=outcome,
                    status_code=status if outcome in (Outcome.SUCCESS, Outcome.HTTP_ERROR) else None,
                    bytes_out=descriptor.bytes_out,
                    bytes_in=len(body),
                )
                with sink_lock:
                    issued[0] += 1
                    results.append(result)
                think_ms = scenario.think_time_ms
                if think_ms > 0:
                    now_s = time.perf_counter() - t0
                    think_ms /= shape_multiplier(shape, now_s, started_at)
                    time.sleep(think_ms / 1000.0)
        except Exception as exc:  # programming errors must not vanish with the thread
            with sink_lock:
                worker_failures.append(exc)
        finally:
            client.close()

    threads = [
        threading.Thread(target=worker, args=(k, offset_ms), name=f"posbench-user-{k}", daemon=True)
        for k, offset_ms in enumerate(_user_start_offsets_ms(scenario))
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    if worker_failures:
        raise worker_failures[0]
    if issued[0] != len(results):
        raise AssertionError(f"issue counter {issued[0]} != recorded results {len(results)}")
    results.sort(key=lambda r: (r.start_offset_ms, r.user_index))
    return RunRecord(run_id=run_id, scenario=scenario, target_label=target.label, seed=seed, started_at=started_at, results=results)


# --- campaign orchestration ------------------------------------------------------


def execute_campaign(
    scenarios: Sequence[LoadScenario],
    catalog: list[OperationSpec],
    mix: WorkloadMix,
    shape: TrafficShape,
    target: Target,
    seed: int,
    persist_dir: str | Path | None = None,
    anchor: datetime = DEFAULT_WALL_ANCHOR,
) -> CampaignRecord:
    """Run every scenario ``repetitions`` times with rests between repetitions.

    Run seeds are ``seed + ordinal`` in execution order. With a persist
    directory each run's raw CSV and the campaign metadata are written as soon
    as the run completes, so an aborted campaign keeps its finished runs.
    """
    if not scenarios:
        raise ValueError("scenarios must be non-empty")
    campaign = CampaignRecord(target_label=target.label, seed=seed)
    emulated = isinstance(target, EmulatedTarget)
    ordinal = 0
    sim_offset_s = 0.0
    for scenario in scenarios:
        for rep in range(1, scenario.repetitions + 1):
            run_id = f"{target.label}-{scenario.name}-r{rep}"
            run_seed = seed + ordinal
            if emulated:
                started_at = anchor + timedelta(seconds=sim_offset_s)
                run = _run_simulated(scenario, catalog, mix, shape, target, run_seed, run_id, started_at)
                sim_offset_s += scenario.ramp_up_s + scenario.steady_s
                if rep < scenario.repetitions:
                    sim_offset_s += scenario.rest_between_runs_s
            else:
                run = _run_threaded(scenario, catalog, mix, shape, target, run_seed, run_id)
                if rep < scenario.repetitions and scenario.rest_between_runs_s > 0:
                    time.sleep(scenario.rest_between_runs_s)
            campaign.runs.append(run)
            ordinal += 1
            if persist_dir is not None:
                persist_campaign(campaign, persist_dir)
    return campaign


# --- persistence ------------------------------------------------------------------


def write_results_csv(run: RunRecord, path: str | Path) -> None:
    """Raw results, one row per request, fixed column order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_COLUMNS)
        for r in run.results:
            writer.writerow(
                [
                    r.run_id,
                    run.scenario.name,
                    run.target_label,
                    r.user_index,
                    r.operation_name,
                    r.category,
                    f"{r.start_offset_ms:.3f}",
                    f"{r.latency_ms:.3f}",
                    r.outcome.value,
                    "" if r.status_code is None else r.status_code,
                    r.bytes_out,
                    r.bytes_in,
                ]
            )


def read_results_csv(path: str | Path) -> tuple[list[RequestResult], int]:
    """Parse a raw results CSV; malformed rows are skipped and counted."""
    results: list[RequestResult] = []
    warnings = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RAW_COLUMNS:
            raise ValueError(f"{path}: unexpected raw CSV header {header!r}")
        for row in reader:
            try:
                if len(row) != len(RAW_COLUMNS):
                    raise ValueError("wrong column count")
                results.append(
                    RequestResult(
                        run_id=row[0],
                        user_index=int(row[3]),
                        operation_name=row[4],
                        category=row[5],
                        start_offset_ms=float(row[6]),
                        latency_ms=float(row[7]),
                        outcome=Outcome(row[8]),
                        status_code=int(row[9]) if row[9] else None,
                        bytes_out=int(row[10]),
                        bytes_in=int(row[11]),
                    )
                )
            except ValueError:
                warnings += 1
    return results, warnings


def scenario_to_dict(scenario: LoadScenario) -> dict:
    return {
        "name": scenario.name,
        "concurrent_users": scenario.concurrent_users,
        "ramp_up_s": scenario.ramp_up_s,
        "steady_s": scenario.steady_s,
        "repetitions": scenario.repetitions,
        "rest_between_runs_s": scenario.rest_between_runs_s,
        "request_timeout_ms": scenario.request_timeout_ms,
        "think_time_ms": scenario.think_time_ms,
    }


def scenario_from_dict(raw: dict) -> LoadScenario:
    return LoadScenario(**raw)


def persist_campaign(campaign: CampaignRecord, out_dir: str | Path) -> Path:
    """Write per-run raw CSVs plus the campaign metadata JSON; returns the meta path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "target_label": campaign.target_label,
        "seed": campaign.seed,
        "prng": campaign.prng,
        "runs": [],
    }
    for run in campaign.runs:
        csv_name = f"raw_{run.run_id}.csv"
        csv_path = out_dir / csv_name
        if not csv_path.exists():
            write_results_csv(run, csv_path)
        meta["runs"].append(
            {
                "run_id": run.run_id,
                "file": csv_name,
                "seed": run.seed,
                "started_at": run.started_at.isoformat(),
                "scenario": scenario_to_dict(run.scenario),
            }
        )
    meta_path = out_dir / f"{campaign.target_label}-campaign.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta_path


def load_campaigns(raw_dir: str | Path) -> tuple[list[RunRecord], int]:
    """Reload all persisted campaigns under ``raw_dir``; returns (runs, warning count)."""
    raw_dir = Path(raw_dir)
    runs: list[RunRecord] = []
    warnings = 0
    for meta_path in sorted(raw_dir.glob("*-campaign.json")):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        for entry in meta["runs"]:
            results, row_warnings = read_results_csv(raw_dir / entry["file"])
            warnings += row_warnings
            runs.append(
                RunRecord(
                    run_id=entry["run_id"],
                    scenario=scenario_from_dict(entry["scenario"]),
                    target_label=meta["target_label"],
                    seed=entry["seed"],
                    started_at=datetime.fromisoformat(entry["started_at"]),
                    results=results,
                    prng=meta.get("prng", PRNG_ALGORITHM),
                )
            )
    return runs, warnings
