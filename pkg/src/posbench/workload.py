"""Retail POS workload model: operation catalog, weighted category sampling,
calendar traffic shaping, and concrete request synthesis."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path

import numpy as np

# Identity of the seeded generator, recorded in run metadata so result sets
# can be reproduced bit-for-bit on another machine.
PRNG_ALGORITHM = "numpy-pcg64-seedsequence"

# Stream id reserved for the emulated service (error/jitter draws); virtual
# users occupy stream ids 0..N-1 and must never collide with it.
SERVICE_STREAM = 1 << 20

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

MIX_TOLERANCE = 1e-9


class MixInvalid(ValueError):
    """Workload mix weights are out of range or do not sum to 1."""


class EmptyCategory(LookupError):
    """The sampled category has no operations in the catalog."""


class UnresolvablePlaceholder(LookupError):
    """A path placeholder has no value in the session and no substitution rule."""


class OperationCategory(Enum):
    TRANSACTION = "transaction"
    INVENTORY = "inventory"
    ANALYTICS = "analytics"


@dataclass(frozen=True)
class OperationSpec:
    """One POS API operation: route shape plus synthetic payload sizing."""

    name: str
    category: OperationCategory
    method: str
    path_template: str
    payload_bytes: int = 0
    expected_response_bytes: int = 256
    intra_category_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.payload_bytes < 0 or self.expected_response_bytes < 0:
            raise ValueError(f"{self.name}: byte sizes must be non-negative")
        if self.method == "GET" and self.payload_bytes != 0:
            raise ValueError(f"{self.name}: GET operations carry no request body")
        if self.intra_category_weight <= 0:
            raise ValueError(f"{self.name}: intra_category_weight must be positive")

    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.path_template)


@dataclass(frozen=True)
class WorkloadMix:
    """Category weights, applied in the fixed order transaction, inventory, analytics."""

    transaction_weight: float = 0.60
    inventory_weight: float = 0.30
    analytics_weight: float = 0.10

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.transaction_weight, self.inventory_weight, self.analytics_weight)


DEFAULT_MIX = WorkloadMix()


@dataclass(frozen=True)
class TrafficShape:
    """Multiplicative intensity pattern: hour-of-day x day-of-week x season."""

    hourly_multipliers: tuple[float, ...] = (1.0,) * 24
    weekday_multipliers: tuple[float, ...] = (1.0,) * 7
    seasonal_multiplier: float = 1.0

    def __post_init__(self) -> None:
        if len(self.hourly_multipliers) != 24:
            raise ValueError("hourly_multipliers must have 24 entries")
        if len(self.weekday_multipliers) != 7:
            raise ValueError("weekday_multipliers must have 7 entries")
        values = (*self.hourly_multipliers, *self.weekday_multipliers, self.seasonal_multiplier)
        if any(m <= 0 for m in values):
            raise ValueError("all shape multipliers must be positive")


IDENTITY_SHAPE = TrafficShape()

# Fixed Monday-morning anchor so emulated campaigns map simulated seconds to
# the same calendar instants on every invocation.
DEFAULT_WALL_ANCHOR = datetime(2025, 1, 6, 8, 0, 0)


def validate_mix(mix: WorkloadMix) -> None:
    """Reject mixes with out-of-range weights or a sum away from 1.0."""
    weights = mix.as_tuple()
    if any(w < 0.0 or w > 1.0 for w in weights):
        raise MixInvalid(f"mix weights must each lie in [0, 1], got {weights}")
    total = sum(weights)
    if abs(total - 1.0) > MIX_TOLERANCE:
        raise MixInvalid(f"mix weights must sum to 1.0, got {weights} (sum {total!r})")


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one stream (per virtual user, or the service)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(stream,))))


def sample_operation(
    catalog: list[OperationSpec],
    mix: WorkloadMix,
    rng: np.random.Generator,
) -> OperationSpec:
    """Draw one operation: category by cumulative mix walk, then spec by intra-category weight.

    Consumes exactly two uniform draws from ``rng``, so equal seeds replay
    equal sequences.
    """
    u = rng.random()
    cumulative = 0.0
    chosen = OperationCategory.ANALYTICS
    for category, weight in zip(
        (OperationCategory.TRANSACTION, OperationCategory.INVENTORY, OperationCategory.ANALYTICS),
        mix.as_tuple(),
    ):
        cumulative += weight
        if u < cumulative:
            chosen = category
            break

    specs = [s for s in catalog if s.category is chosen]
    if not specs:
        raise EmptyCategory(f"catalog has no operations in category {chosen.value!r}")

    total = sum(s.intra_category_weight for s in specs)
    v = rng.random() * total
    cumulative = 0.0
    for spec in specs:
        cumulative += spec.intra_category_weight
        if v < cumulative:
            return spec
    return specs[-1]


def shape_multiplier(shape: TrafficShape, timestamp_s: float, wall_anchor: datetime) -> float:
    """Intensity multiplier at ``wall_anchor + timestamp_s`` seconds."""
    at = wall_anchor + timedelta(seconds=timestamp_s)
    return (
        shape.hourly_multipliers[at.hour]
        * shape.weekday_multipliers[at.weekday()]
        * shape.seasonal_multiplier
    )


@dataclass
class RequestDescriptor:
    """A fully resolved request, ready for the wire."""

    operation: OperationSpec
    method: str
    path: str
    body: bytes
    substituted_for: str | None = None

    @property
    def bytes_out(self) -> int:
        return len(self.body)


@dataclass
class SessionState:
    """Per-virtual-user state: sale lifecycle progress and the product universe.

    Requests are built from this state only, so a user's operation sequence is
    a pure function of (catalog, mix, seed, observed responses).
    """

    user_index: int
    product_count: int = 1000
    sale_creation: OperationSpec | None = None
    open_sale_id: str | None = None
    last_sale_id: str | None = None
    substitutions: int = 0
    issued_names: list[str] = field(default_factory=list)

    def observe_response(self, descriptor: RequestDescriptor, status_code: int, body: bytes) -> None:
        """Fold a completed request back into the sale lifecycle."""
        if not 200 <= status_code <= 299:
            return
        op = descriptor.operation
        if op.method == "POST" and not op.placeholders():
            sale_id = _extract_sale_id(body)
            if sale_id is not None:
                self.open_sale_id = sale_id
                self.last_sale_id = sale_id
        elif op.path_template.endswith("/payment"):
            self.open_sale_id = None


def _extract_sale_id(body: bytes) -> str | None:
    try:
        payload = json.loads(body)
    except (ValueError, UnicodeDecodeError):
        return None
    sale_id = payload.get("sale_id") if isinstance(payload, dict) else None
    return str(sale_id) if sale_id is not None else None


def session_for_user(catalog: list[OperationSpec], user_index: int, product_count: int = 1000) -> SessionState:
    return SessionState(
        user_index=user_index,
        product_count=product_count,
        sale_creation=_find_sale_creation(catalog),
    )


def _find_sale_creation(catalog: list[OperationSpec]) -> OperationSpec | None:
    # The sale opener is the transaction POST with a fully static path.
    for spec in catalog:
        if spec.category is OperationCategory.TRANSACTION and spec.method == "POST" and not spec.placeholders():
            return spec
    return None


def build_request(
    spec: OperationSpec,
    session: SessionState,
    rng: np.random.Generator,
) -> RequestDescriptor:
    """Resolve placeholders and synthesize a body of exactly ``payload_bytes`` bytes.

    A transaction operation that needs a sale id while the session has none is
    replaced by the sale-creation operation and the substitution recorded.
    """
    effective = spec
    substituted_for: str | None = None

    if "sale_id" in spec.placeholders() and _sale_id_for(spec, session) is None:
        if spec.category is OperationCategory.TRANSACTION and session.sale_creation is not None:
            effective = session.sale_creation
            substituted_for = spec.name
            session.substitutions += 1
        else:
            raise UnresolvablePlaceholder(f"{spec.name}: no sale id available in session")

    path = effective.path_template
    for placeholder in effective.placeholders():
        if placeholder == "sale_id":
            value = _sale_id_for(effective, session)
        elif placeholder == "product_id":
            value = str(int(rng.integers(1, session.product_count + 1)))
        else:
            raise UnresolvablePlaceholder(f"{effective.name}: unknown placeholder {placeholder!r}")
        if value is None:
            raise UnresolvablePlaceholder(f"{effective.name}: no value for {placeholder!r}")
        path = path.replace("{" + placeholder + "}", value)

    body = _synthesize_body(effective, session, rng)
    session.issued_names.append(effective.name)
    return RequestDescriptor(
        operation=effective,
        method=effective.method,
        path=path,
        body=body,
        substituted_for=substituted_for,
    )


def _sale_id_for(spec: OperationSpec, session: SessionState) -> str | None:
    if spec.method == "GET":
        return session.last_sale_id or session.open_sale_id
    return session.open_sale_id


def _synthesize_body(spec: OperationSpec, session: SessionState, rng: np.random.Generator) -> bytes:
    if spec.payload_bytes == 0:
        return b""
    fields = _semantic_fields(spec, session, rng)
    fields["pad"] = ""
    base = len(json.dumps(fields, separators=(",", ":")).encode("ascii"))
    fields["pad"] = "x" * max(0, spec.payload_bytes - base)
    return json.dumps(fields, separators=(",", ":")).encode("ascii")


def _semantic_fields(spec: OperationSpec, session: SessionState, rng: np.random.Generator) -> dict:
    tail = spec.path_template.rsplit("/", 1)[-1]
    if tail == "items":
        return {
            "product_id": int(rng.integers(1, session.product_count + 1)),
            "qty": int(rng.integers(1, 4)),
        }
    if tail == "discount":
        return {"amount_usd": f"{0.25 * int(rng.integers(1, 9)):.2f}"}
    if tail == "payment":
        return {"method": "card"}
    if tail == "stock":
        return {"delta": int((-1, 1, 2, 3)[int(rng.integers(0, 4))])}
    # Static-path POST: the sale opener.
    return {"register": f"r{session.user_index % 8 + 1}"}


# --- Catalog -----------------------------------------------------------------

_CATALOG_KEYS = {
    "name",
    "category",
    "method",
    "path_template",
    "payload_bytes",
    "expected_response_bytes",
    "intra_category_weight",
}

_KNOWN_PLACEHOLDERS = {"sale_id", "product_id"}


def default_catalog() -> list[OperationSpec]:
    """The embedded 12-operation POS catalog (5 transaction, 4 inventory, 3 analytics)."""
    t, i, a = OperationCategory.TRANSACTION, OperationCategory.INVENTORY, OperationCategory.ANALYTICS
    return [
        OperationSpec("create_sale", t, "POST", "/sales", payload_bytes=512),
        OperationSpec("add_item", t, "POST", "/sales/{sale_id}/items", payload_bytes=512),
        OperationSpec("apply_discount", t, "POST", "/sales/{sale_id}/discount", payload_bytes=512),
        OperationSpec("process_payment", t, "POST", "/sales/{sale_id}/payment", payload_bytes=512),
        OperationSpec("get_receipt", t, "GET", "/sales/{sale_id}/receipt"),
        OperationSpec("product_detail", i, "GET", "/products/{product_id}"),
        OperationSpec("price_check", i, "GET", "/products/{product_id}/price"),
        OperationSpec("stock_update", i, "PUT", "/products/{product_id}/stock", payload_bytes=512),
        OperationSpec("availability", i, "GET", "/products/{product_id}/availability"),
        OperationSpec("sales_summary", a, "GET", "/reports/sales-summary", expected_response_bytes=2048),
        OperationSpec("inventory_report", a, "GET", "/reports/inventory", expected_response_bytes=2048),
        OperationSpec("employee_metrics", a, "GET", "/reports/employee-metrics", expected_response_bytes=2048),
    ]


def validate_catalog(catalog: list[OperationSpec]) -> None:
    if not catalog:
        raise ValueError("catalog is empty")
    seen: set[str] = set()
    for spec in catalog:
        if spec.name in seen:
            raise ValueError(f"duplicate operation name {spec.name!r}")
        seen.add(spec.name)
        unknown = set(spec.placeholders()) - _KNOWN_PLACEHOLDERS
        if unknown:
            raise ValueError(f"{spec.name}: unresolvable placeholders {sorted(unknown)}")
    for category in OperationCategory:
        if not any(s.category is category for s in catalog):
            raise ValueError(f"catalog has no operations in category {category.value!r}")


def load_catalog(path: str | Path) -> list[OperationSpec]:
    """Load a JSON array of operation specs; schema errors name the offending entry."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("catalog file must contain a JSON array")
    catalog: list[OperationSpec] = []
    for idx, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ValueError(f"catalog[{idx}]: expected an object")
        unknown = set(entry) - _CATALOG_KEYS
        if unknown:
            raise ValueError(f"catalog[{idx}]: unknown keys {sorted(unknown)}")
        try:
            category = OperationCategory(entry["category"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"catalog[{idx}]: bad or missing category") from exc
        try:
            catalog.append(
                OperationSpec(
                    name=entry["name"],
                    category=category,
                    method=entry["method"],
                    path_template=entry["path_template"],
                    payload_bytes=int(entry.get("payload_bytes", 0)),
                    expected_response_bytes=int(entry.get("expected_response_bytes", 256)),
                    intra_category_weight=float(entry.get("intra_category_weight", 1.0)),
                )
            )
        except KeyError as exc:
            raise ValueError(f"catalog[{idx}]: missing field {exc.args[0]!r}") from exc
    validate_catalog(catalog)
    return catalog
