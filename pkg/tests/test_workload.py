"""Workload model tests: mix validation, weighted sampling, traffic shaping,
and request synthesis with the sale-session substitution rule."""

import hashlib
import json
from collections import Counter
from datetime import datetime

import pytest

from posbench.workload import (
    DEFAULT_MIX,
    IDENTITY_SHAPE,
    EmptyCategory,
    MixInvalid,
    OperationCategory,
    OperationSpec,
    SessionState,
    TrafficShape,
    UnresolvablePlaceholder,
    WorkloadMix,
    build_request,
    default_catalog,
    load_catalog,
    make_rng,
    sample_operation,
    session_for_user,
    shape_multiplier,
    validate_mix,
)

# Regression pin for the seeded sampler: sha256 over the first 10k operation
# names drawn with seed=42, stream=0 against the default catalog and mix.
FROZEN_SEQUENCE_HASH = "d3ec2d5ce30bed32964e6c4081aca7a3e47e434a87597ebf102c5c78f6549514"


class FakeRng:
    """Replays scripted uniform draws; integers() picks the low bound."""

    def __init__(self, draws):
        self.draws = list(draws)

    def random(self):
        return self.draws.pop(0)

    def integers(self, low, high):
        return low


class TestWorkloadMix:
    def test_default_mix_is_60_30_10(self):
        assert DEFAULT_MIX.as_tuple() == (0.60, 0.30, 0.10)
        validate_mix(DEFAULT_MIX)

    def test_degenerate_single_category_mix_is_valid(self):
        validate_mix(WorkloadMix(1.0, 0.0, 0.0))

    def test_sum_above_one_rejected_with_values(self):
        with pytest.raises(MixInvalid) as err:
            validate_mix(WorkloadMix(0.5, 0.5, 0.5))
        assert "0.5" in str(err.value)

    @pytest.mark.parametrize("weights", [(-0.1, 1.0, 0.1), (1.2, -0.1, -0.1), (0.7, 0.2, 0.2)])
    def test_invalid_weights_rejected(self, weights):
        with pytest.raises(MixInvalid):
            validate_mix(WorkloadMix(*weights))


class TestSampleOperation:
    def test_lower_cdf_boundary_hits_transaction(self):
        spec = sample_operation(default_catalog(), DEFAULT_MIX, FakeRng([0.0, 0.0]))
        assert spec.category is OperationCategory.TRANSACTION

    def test_draw_in_third_band_hits_analytics(self):
        # Cumulative walk 0.60 -> 0.90 -> 1.00; 0.95 falls in the third band.
        spec = sample_operation(default_catalog(), DEFAULT_MIX, FakeRng([0.95, 0.0]))
        assert spec.category is OperationCategory.ANALYTICS

    def test_band_edges(self):
        assert sample_operation(default_catalog(), DEFAULT_MIX, FakeRng([0.599, 0.0])).category is OperationCategory.TRANSACTION
        assert sample_operation(default_catalog(), DEFAULT_MIX, FakeRng([0.60, 0.0])).category is OperationCategory.INVENTORY
        assert sample_operation(default_catalog(), DEFAULT_MIX, FakeRng([0.899, 0.0])).category is OperationCategory.INVENTORY
        assert sample_operation(default_catalog(), DEFAULT_MIX, FakeRng([0.90, 0.0])).category is OperationCategory.ANALYTICS

    def test_intra_category_weight_respected(self):
        heavy = OperationSpec("heavy", OperationCategory.TRANSACTION, "POST", "/sales", 512, intra_category_weight=9.0)
        light = OperationSpec("light", OperationCategory.TRANSACTION, "POST", "/sales", 512, intra_category_weight=1.0)
        catalog = [heavy, light, *default_catalog()[5:]]
        # Second draw scales to total weight 10: 0.85 -> within heavy's band [0, 9).
        assert sample_operation(catalog, WorkloadMix(1.0, 0.0, 0.0), FakeRng([0.0, 0.85])).name == "heavy"
        assert sample_operation(catalog, WorkloadMix(1.0, 0.0, 0.0), FakeRng([0.0, 0.95])).name == "light"

    def test_empty_category_raises(self):
        catalog = [s for s in default_catalog() if s.category is not OperationCategory.ANALYTICS]
        with pytest.raises(EmptyCategory):
            sample_operation(catalog, DEFAULT_MIX, FakeRng([0.95, 0.0]))

    def test_mix_convergence_100k(self):
        """Category frequencies over 100k draws stay within 1 percentage point."""
        rng = make_rng(7, 0)
        catalog = default_catalog()
        counts = Counter(sample_operation(catalog, DEFAULT_MIX, rng).category for _ in range(100_000))
        for category, expected in [
            (OperationCategory.TRANSACTION, 60.0),
            (OperationCategory.INVENTORY, 30.0),
            (OperationCategory.ANALYTICS, 10.0),
        ]:
            observed = 100.0 * counts[category] / 100_000
            assert abs(observed - expected) < 1.0, f"{category}: {observed}%"

    def test_identical_seed_identical_sequence(self):
        catalog = default_catalog()
        rng_a, rng_b = make_rng(42, 0), make_rng(42, 0)
        seq_a = [sample_operation(catalog, DEFAULT_MIX, rng_a).name for _ in range(10_000)]
        seq_b = [sample_operation(catalog, DEFAULT_MIX, rng_b).name for _ in range(10_000)]
        assert seq_a == seq_b
        digest = hashlib.sha256("\n".join(seq_a).encode()).hexdigest()
        assert digest == FROZEN_SEQUENCE_HASH

    def test_per_user_streams_differ(self):
        catalog = default_catalog()
        seq0 = [sample_operation(catalog, DEFAULT_MIX, make_rng(42, 0)).name for _ in range(50)]
        seq1 = [sample_operation(catalog, DEFAULT_MIX, make_rng(42, 1)).name for _ in range(50)]
        assert seq0 != seq1


class TestShapeMultiplier:
    ANCHOR = datetime(2025, 1, 6, 0, 0, 0)  # a Monday, midnight

    def test_identity_shape_is_one(self):
        for ts in (0, 3600.5, 86_400 * 3 + 7):
            assert shape_multiplier(IDENTITY_SHAPE, ts, self.ANCHOR) == 1.0

    def test_hourly_multiplier_alone(self):
        hourly = [1.0] * 24
        hourly[12] = 2.0
        shape = TrafficShape(hourly_multipliers=tuple(hourly))
        assert shape_multiplier(shape, 12 * 3600, self.ANCHOR) == pytest.approx(2.0)
        assert shape_multiplier(shape, 11 * 3600, self.ANCHOR) == pytest.approx(1.0)

    def test_fully_multiplicative(self):
        hourly = [1.0] * 24
        hourly[12] = 2.0
        weekday = [1.0] * 7
        weekday[5] = 1.5  # Saturday
        shape = TrafficShape(tuple(hourly), tuple(weekday), 2.0)
        # Monday anchor + 5 days = Saturday, hour 12.
        ts = 5 * 86_400 + 12 * 3600
        assert shape_multiplier(shape, ts, self.ANCHOR) == pytest.approx(6.0)

    def test_product_of_separate_shapes(self):
        """A combined shape evaluates to the product of its single-axis parts."""
        hourly = tuple(1.0 + (h % 5) / 10 for h in range(24))
        weekday = tuple(1.0 + d / 20 for d in range(7))
        combined = TrafficShape(hourly, weekday, 1.7)
        only_hourly = TrafficShape(hourly_multipliers=hourly)
        only_weekday = TrafficShape(weekday_multipliers=weekday)
        only_seasonal = TrafficShape(seasonal_multiplier=1.7)
        for ts in (0, 3_600, 90_000, 400_000):
            product = (
                shape_multiplier(only_hourly, ts, self.ANCHOR)
                * shape_multiplier(only_weekday, ts, self.ANCHOR)
                * shape_multiplier(only_seasonal, ts, self.ANCHOR)
            )
            assert shape_multiplier(combined, ts, self.ANCHOR) == pytest.approx(product)

    def test_nonpositive_multiplier_rejected(self):
        with pytest.raises(ValueError):
            TrafficShape(seasonal_multiplier=0.0)
        with pytest.raises(ValueError):
            TrafficShape(hourly_multipliers=(1.0,) * 23)


def _spec(name):
    return next(s for s in default_catalog() if s.name == name)


class TestBuildRequest:
    def test_price_check_direct_substitution(self):
        session = session_for_user(default_catalog(), 0, product_count=100)
        rng = FakeRng([])  # integers() returns the low bound = product 1
        descriptor = build_request(_spec("price_check"), session, rng)
        assert descriptor.method == "GET"
        assert descriptor.path == "/products/1/price"
        assert descriptor.body == b""

    def test_payment_without_open_sale_substitutes_creation(self):
        session = session_for_user(default_catalog(), 0)
        descriptor = build_request(_spec("process_payment"), session, FakeRng([]))
        assert descriptor.operation.name == "create_sale"
        assert descriptor.method == "POST"
        assert descriptor.path == "/sales"
        assert descriptor.substituted_for == "process_payment"
        assert session.substitutions == 1

    def test_payment_with_open_sale_goes_through(self):
        session = session_for_user(default_catalog(), 0)
        session.open_sale_id = "s9"
        descriptor = build_request(_spec("process_payment"), session, FakeRng([]))
        assert descriptor.path == "/sales/s9/payment"
        assert descriptor.substituted_for is None

    def test_body_is_exactly_payload_bytes(self):
        spec = OperationSpec("add_item", OperationCategory.TRANSACTION, "POST", "/sales/{sale_id}/items", payload_bytes=256)
        session = session_for_user(default_catalog(), 0)
        session.open_sale_id = "s1"
        descriptor = build_request(spec, session, FakeRng([]))
        assert len(descriptor.body) == 256
        assert descriptor.bytes_out == 256
        parsed = json.loads(descriptor.body)
        assert parsed["product_id"] == 1 and parsed["qty"] == 1

    def test_default_transaction_payload_512(self):
        session = session_for_user(default_catalog(), 0)
        session.open_sale_id = "s1"
        descriptor = build_request(_spec("add_item"), session, FakeRng([]))
        assert len(descriptor.body) == 512

    def test_unknown_placeholder_rejected(self):
        bad = OperationSpec("weird", OperationCategory.INVENTORY, "GET", "/stores/{store_id}")
        with pytest.raises(UnresolvablePlaceholder):
            build_request(bad, session_for_user(default_catalog(), 0), FakeRng([]))

    def test_no_substitution_rule_without_creation_spec(self):
        session = SessionState(user_index=0, sale_creation=None)
        with pytest.raises(UnresolvablePlaceholder):
            build_request(_spec("process_payment"), session, FakeRng([]))

    def test_receipt_uses_last_sale_after_payment(self):
        session = session_for_user(default_catalog(), 0)
        create = build_request(_spec("create_sale"), session, FakeRng([]))
        session.observe_response(create, 201, b'{"sale_id":"s7","status":"open"}')
        assert session.open_sale_id == "s7"
        pay = build_request(_spec("process_payment"), session, FakeRng([]))
        session.observe_response(pay, 200, b'{"sale_id":"s7","status":"paid"}')
        assert session.open_sale_id is None
        receipt = build_request(_spec("get_receipt"), session, FakeRng([]))
        assert receipt.path == "/sales/s7/receipt"

    def test_never_sale_mutation_before_creation(self):
        """No payment/discount/receipt ever precedes a sale creation in a session."""
        catalog = default_catalog()
        rng = make_rng(11, 3)
        session = session_for_user(catalog, 3)
        needs_sale = {"add_item", "apply_discount", "process_payment", "get_receipt"}
        for i in range(2_000):
            spec = sample_operation(catalog, DEFAULT_MIX, rng)
            descriptor = build_request(spec, session, rng)
            if descriptor.operation.name in needs_sale:
                assert "create_sale" in session.issued_names[:-1]
            if descriptor.operation.name == "create_sale":
                session.observe_response(descriptor, 201, b'{"sale_id":"s1"}')


class TestCatalog:
    def test_default_catalog_counts(self):
        catalog = default_catalog()
        counts = Counter(s.category for s in catalog)
        assert len(catalog) == 12
        assert counts[OperationCategory.TRANSACTION] == 5
        assert counts[OperationCategory.INVENTORY] == 4
        assert counts[OperationCategory.ANALYTICS] == 3

    def test_reads_carry_no_payload(self):
        for spec in default_catalog():
            if spec.method == "GET":
                assert spec.payload_bytes == 0

    def test_get_with_payload_rejected(self):
        with pytest.raises(ValueError):
            OperationSpec("bad", OperationCategory.INVENTORY, "GET", "/products/{product_id}", payload_bytes=8)

    def test_load_catalog_round_trip(self, tmp_path):
        path = tmp_path / "catalog.json"
        entries = [
            {
                "name": s.name,
                "category": s.category.value,
                "method": s.method,
                "path_template": s.path_template,
                "payload_bytes": s.payload_bytes,
                "expected_response_bytes": s.expected_response_bytes,
                "intra_category_weight": s.intra_category_weight,
            }
            for s in default_catalog()
        ]
        path.write_text(json.dumps(entries))
        assert load_catalog(path) == default_catalog()

    def test_load_catalog_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "catalog.json"
        path.write_text(json.dumps([{"name": "x", "category": "inventory", "method": "GET", "path_template": "/x", "frob": 1}]))
        with pytest.raises(ValueError, match="unknown keys"):
            load_catalog(path)

    def test_load_catalog_requires_all_categories(self, tmp_path):
        path = tmp_path / "catalog.json"
        path.write_text(json.dumps([{"name": "x", "category": "inventory", "method": "GET", "path_template": "/x"}]))
        with pytest.raises(ValueError, match="no operations in category"):
            load_catalog(path)
