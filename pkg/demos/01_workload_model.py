"""Tour of the POS workload model: the operation catalog, seeded weighted
sampling, calendar traffic shaping, and concrete request synthesis.

Run:  python demos/01_workload_model.py
"""

from collections import Counter
from datetime import datetime

from posbench import (
    DEFAULT_MIX,
    TrafficShape,
    build_request,
    default_catalog,
    make_rng,
    sample_operation,
    session_for_user,
    shape_multiplier,
)

# --- The operation catalog -----------------------------------------------------
# Twelve operations across three categories: 5 transaction, 4 inventory,
# 3 analytics. Each carries its route shape and synthetic payload sizing.

catalog = default_catalog()
print("operation catalog:")
for spec in catalog:
    print(f"  {spec.category.value:<12} {spec.method:<4} {spec.path_template:<32} payload={spec.payload_bytes}B")

# --- Weighted sampling ----------------------------------------------------------
# Categories are drawn by a cumulative walk over the 60/30/10 mix; within a
# category, operations are weighted (uniform by default). Every draw comes
# from an explicit seeded generator, so sequences replay exactly.

rng = make_rng(seed=42, stream=0)
draws = [sample_operation(catalog, DEFAULT_MIX, rng) for _ in range(50_000)]
freq = Counter(spec.category.value for spec in draws)
print("\nempirical category mix over 50,000 draws (target 60/30/10):")
for category, count in freq.most_common():
    print(f"  {category:<12} {100 * count / len(draws):5.2f}%")

# --- Traffic shaping -------------------------------------------------------------
# A shape is three multiplicative patterns: hour-of-day, day-of-week, season.
# The engine divides user think time by this multiplier, so a 2x hour doubles
# per-user request intensity (when think time is nonzero).

hourly = [0.4] * 24
for hour in range(9, 19):
    hourly[hour] = 1.0
hourly[12] = 2.0  # lunch rush
weekday = [1.0, 0.9, 0.9, 1.0, 1.3, 1.8, 0.7]  # Fri/Sat peaks, quiet Sunday
shape = TrafficShape(tuple(hourly), tuple(weekday), seasonal_multiplier=1.5)

anchor = datetime(2025, 1, 6, 0, 0, 0)  # a Monday
print("\nshape multiplier across Monday (seasonal 1.5x):")
for hour in (3, 9, 12, 20):
    multiplier = shape_multiplier(shape, hour * 3600, anchor)
    print(f"  {hour:02d}:00 -> {multiplier:.2f}x")
saturday_noon = 5 * 86_400 + 12 * 3600
print(f"  Saturday 12:00 -> {shape_multiplier(shape, saturday_noon, anchor):.2f}x")

# --- Request synthesis ------------------------------------------------------------
# A per-user session resolves path placeholders and enforces the sale
# lifecycle: a payment drawn before any sale exists is substituted by the
# sale-creation call, and the substitution is recorded.

session = session_for_user(catalog, user_index=0)
payment_spec = next(spec for spec in catalog if spec.name == "process_payment")
descriptor = build_request(payment_spec, session, rng)
print("\npayment drawn with no open sale:")
print(f"  issued     {descriptor.method} {descriptor.path} ({descriptor.bytes_out} bytes)")
print(f"  substituted_for = {descriptor.substituted_for}")

session.observe_response(descriptor, 201, b'{"sale_id": "s1", "status": "open"}')
descriptor = build_request(payment_spec, session, rng)
print("after the sale opened:")
print(f"  issued     {descriptor.method} {descriptor.path}")
print(f"  session substitutions so far: {session.substitutions}")
