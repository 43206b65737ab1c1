"""Phase 1, inception: parse the purpose, load the candidate resources, match
them against the competency queries, and gate on coverage (eval_a).

Resources are processed per reusability category (common, then core, then
contextual) and ranked inside each category by coverage first, popularity
second.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence, Union

from .metrics import (
    GateReport,
    MetricResult,
    Thresholds,
    coverage,
    gate_from_results,
)
from .model import (
    CATEGORIES,
    CompetencyQuery,
    Column,
    DatasetSchema,
    DocumentError,
    ETG,
    Label,
    ModelError,
    ResourceMeta,
    etype_elements,
    load_etg,
    normalize_label,
    normalize_text,
    property_elements,
    validate_etg,
)

# Remediation shown when a dataset falls below the coverage gate.
REUSE_HINT = "below the coverage gate: revise the competency queries or drop this dataset"


class PurposeParseError(ValueError):
    """The purpose file is missing, malformed, or violates an invariant."""


class DuplicateIdError(PurposeParseError):
    """Two competency queries or two resources share an id."""


@dataclass(frozen=True)
class ResourceRef:
    """A purpose entry pointing at a dataset or schema file on disk."""

    path: str
    meta: ResourceMeta


@dataclass(frozen=True)
class PropertyOverride:
    """Purpose-level typing for a property that would otherwise default to a
    string-valued data property."""

    kind: str = "data"
    datatype: str | None = None
    range: Label | None = None


@dataclass(frozen=True)
class Purpose:
    """The full input specification: narrative, competency queries, and the
    candidate resources with their catalog metadata."""

    title: str
    narrative: str
    cqs: tuple[CompetencyQuery, ...]
    dataset_refs: tuple[ResourceRef, ...]
    ontology_refs: tuple[ResourceRef, ...]
    property_overrides: Mapping[str, PropertyOverride] = field(default_factory=dict)

    @property
    def slug(self) -> str:
        return normalize_text(self.title)

    def ref_for(self, resource_id: str) -> ResourceRef | None:
        for ref in self.dataset_refs + self.ontology_refs:
            if ref.meta.id == resource_id:
                return ref
        return None


def _parse_cq(raw: Mapping, index: int) -> CompetencyQuery:
    where = f"cqs[{index}]"
    if "id" not in raw:
        raise PurposeParseError(f"{where}: missing 'id'")
    cq_id = str(raw["id"])
    etypes = frozenset(normalize_label(str(e)) for e in raw.get("etypes", []))
    pairs = frozenset(
        (normalize_label(str(etype)), normalize_label(str(prop)))
        for etype, prop in raw.get("properties", [])
    )
    try:
        return CompetencyQuery(
            id=cq_id,
            sentence=str(raw.get("sentence", "")),
            etypes=etypes,
            property_pairs=pairs,
        )
    except ModelError as exc:
        raise PurposeParseError(f"{where}: {exc}") from exc


def _parse_refs(raw_list: Sequence, kind: str, where: str) -> tuple[ResourceRef, ...]:
    refs = []
    for index, raw in enumerate(raw_list):
        spot = f"{where}[{index}]"
        for key in ("id", "path", "category"):
            if key not in raw:
                raise PurposeParseError(f"{spot}: missing {key!r}")
        try:
            meta = ResourceMeta(
                id=str(raw["id"]),
                kind=kind,
                category=str(raw["category"]),
                popularity=int(raw.get("popularity", 0)),
                origin=str(raw.get("origin", "")),
            )
        except (ModelError, ValueError) as exc:
            raise PurposeParseError(f"{spot}: {exc}") from exc
        refs.append(ResourceRef(path=str(raw["path"]), meta=meta))
    return tuple(refs)


def _parse_overrides(raw: Mapping) -> dict[str, PropertyOverride]:
    overrides: dict[str, PropertyOverride] = {}
    for raw_key, spec in sorted(raw.items()):
        where = f"property_overrides[{raw_key!r}]"
        try:
            etype_part, _, prop_part = raw_key.partition(".")
            key = f"{normalize_text(etype_part)}.{normalize_text(prop_part)}"
        except ModelError as exc:
            raise PurposeParseError(f"{where}: {exc}") from exc
        kind = str(spec.get("kind", "data"))
        if kind not in ("data", "object"):
            raise PurposeParseError(f"{where}: unknown kind {kind!r}")
        if kind == "object" and spec.get("range") is None:
            raise PurposeParseError(f"{where}: object override needs a 'range'")
        overrides[key] = PropertyOverride(
            kind=kind,
            datatype=str(spec["datatype"]) if spec.get("datatype") is not None else None,
            range=normalize_label(str(spec["range"])) if spec.get("range") is not None else None,
        )
    return overrides


def parse_purpose(path: Path) -> Purpose:
    """Parse and validate a purpose file.

    Labels are normalized on the way in; competency queries must be non-empty
    and ids unique across queries and across resources.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PurposeParseError(f"cannot read purpose file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PurposeParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise PurposeParseError(f"{path}: purpose root must be an object")
    if not str(doc.get("title", "")).strip():
        raise PurposeParseError(f"{path}: missing or empty 'title'")

    raw_cqs = doc.get("cqs", [])
    if not raw_cqs:
        raise PurposeParseError(f"{path}: purpose must state at least one competency query")
    cqs = tuple(_parse_cq(raw, i) for i, raw in enumerate(raw_cqs))
    seen: set[str] = set()
    for cq in cqs:
        if cq.id in seen:
            raise DuplicateIdError(f"duplicate competency query id {cq.id!r}")
        seen.add(cq.id)

    dataset_refs = _parse_refs(doc.get("datasets", []), "dataset", "datasets")
    ontology_refs = _parse_refs(doc.get("ontologies", []), "ontology", "ontologies")
    seen = set()
    for ref in dataset_refs + ontology_refs:
        if ref.meta.id in seen:
            raise DuplicateIdError(f"duplicate resource id {ref.meta.id!r}")
        seen.add(ref.meta.id)

    return Purpose(
        title=str(doc["title"]),
        narrative=str(doc.get("narrative", "")),
        cqs=cqs,
        dataset_refs=dataset_refs,
        ontology_refs=ontology_refs,
        property_overrides=_parse_overrides(doc.get("property_overrides", {})),
    )


# ---------------------------------------------------------------------------
# Resource collection


@dataclass(frozen=True)
class LoadFailure:
    """One resource that could not be loaded; collection continues past it."""

    resource_id: str
    path: str
    message: str


@dataclass(frozen=True)
class ResourceCatalog:
    """Loaded resources keyed by id, plus the failures encountered."""

    resources: Mapping[str, Union[ETG, DatasetSchema]]
    errors: tuple[LoadFailure, ...]

    def datasets(self) -> dict[str, DatasetSchema]:
        return {k: v for k, v in self.resources.items() if isinstance(v, DatasetSchema)}

    def ontologies(self) -> dict[str, ETG]:
        return {k: v for k, v in self.resources.items() if isinstance(v, ETG)}


def sidecar_schema_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".schema.json")


def read_csv_header(path: Path) -> list[str]:
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            return next(reader)
        except StopIteration:
            raise DocumentError(f"{path}: dataset file has no header row") from None


def load_dataset_schema(csv_path: Path, meta: ResourceMeta) -> DatasetSchema:
    """Load a dataset's sidecar schema and check it against the CSV header.

    The sidecar lives next to the data file as `<stem>.schema.json`; header
    columns it does not mention are kept as unmapped attributes.
    """
    schema_path = sidecar_schema_path(csv_path)
    try:
        doc = json.loads(schema_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DocumentError(f"cannot read schema sidecar {schema_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{schema_path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    if "etype" not in doc:
        raise DocumentError(f"{schema_path}: missing 'etype'")

    header = [normalize_label(h) for h in read_csv_header(csv_path)]
    header_names = {h.normalized for h in header}
    columns: dict[str, Column] = {}
    for raw in doc.get("columns", []):
        name = normalize_label(str(raw["name"]))
        if name.normalized not in header_names:
            raise DocumentError(
                f"{schema_path}: column {name} is not present in the header of {csv_path.name}"
            )
        mapped = raw.get("property")
        columns[name.normalized] = Column(
            name=name,
            mapped=normalize_label(str(mapped)) if mapped is not None else None,
            role=str(raw.get("role", "attribute")),
        )
    ordered = tuple(
        columns.get(h.normalized, Column(name=h)) for h in header
    )
    return DatasetSchema(
        dataset_id=meta.id,
        assigned_etype=normalize_label(str(doc["etype"])),
        columns=ordered,
        meta=meta,
    )


def collect_resources(refs: Sequence[ResourceRef], base_dir: Path) -> ResourceCatalog:
    """Load every referenced resource, validating as it goes.

    Failures are collected per resource; everything loadable is still
    returned, so one bad file does not sink the whole catalog.
    """
    resources: dict[str, Union[ETG, DatasetSchema]] = {}
    errors: list[LoadFailure] = []
    for ref in refs:
        path = base_dir / ref.path
        try:
            if ref.meta.kind == "dataset":
                resources[ref.meta.id] = load_dataset_schema(path, ref.meta)
            else:
                etg = load_etg(path, meta=ref.meta)
                violations = validate_etg(etg)
                if violations:
                    listed = "; ".join(str(v) for v in violations)
                    raise DocumentError(f"invalid schema graph: {listed}")
                resources[ref.meta.id] = etg
        except (OSError, ModelError, ValueError) as exc:
            errors.append(LoadFailure(resource_id=ref.meta.id, path=str(path), message=str(exc)))
    return ResourceCatalog(resources=resources, errors=tuple(errors))


# ---------------------------------------------------------------------------
# Matching and ranking


@dataclass(frozen=True)
class RankedResource:
    """One shortlisted resource with its coverage scores against the queries.

    `property_coverage` is None when the queries declare no property pairs
    (coverage over an empty requirement set is undefined)."""

    resource_id: str
    kind: str
    category: str
    popularity: int
    etype_coverage: MetricResult
    property_coverage: MetricResult | None

    def sort_key(self):
        prop_cov = self.property_coverage.value if self.property_coverage else Fraction(0)
        return (-self.etype_coverage.value, -prop_cov, -self.popularity, self.resource_id)


@dataclass(frozen=True)
class CandidateRanking:
    """Per-category shortlists in ranking order, plus the excluded resources."""

    by_category: Mapping[str, tuple[RankedResource, ...]]
    excluded: tuple[tuple[str, str], ...]

    def all_entries(self) -> list[RankedResource]:
        return [e for cat in CATEGORIES for e in self.by_category.get(cat, ())]

    def datasets(self) -> list[RankedResource]:
        return [e for e in self.all_entries() if e.kind == "dataset"]


def match_resources(cqs: Sequence[CompetencyQuery], catalog: ResourceCatalog) -> CandidateRanking:
    """Score every loaded resource against the queries and rank per category.

    Resources overlapping the queries in neither etypes nor properties are
    excluded from reuse but recorded for auditability.
    """
    cq_etypes = etype_elements(cqs)
    cq_props = property_elements(cqs)
    buckets: dict[str, list[RankedResource]] = {c: [] for c in CATEGORIES}
    excluded: list[tuple[str, str]] = []
    for resource_id in sorted(catalog.resources):
        resource = catalog.resources[resource_id]
        meta = resource.meta
        etype_cov = coverage(cq_etypes, etype_elements(resource))
        prop_cov = None
        if cq_props.members:
            prop_cov = coverage(cq_props, property_elements(resource))
        prop_value = prop_cov.value if prop_cov else Fraction(0)
        if etype_cov.value == 0 and prop_value == 0:
            excluded.append((resource_id, "no overlap with the competency queries"))
            continue
        buckets[meta.category].append(
            RankedResource(
                resource_id=resource_id,
                kind=meta.kind,
                category=meta.category,
                popularity=meta.popularity,
                etype_coverage=etype_cov,
                property_coverage=prop_cov,
            )
        )
    ranked = {
        category: tuple(sorted(entries, key=RankedResource.sort_key))
        for category, entries in buckets.items()
    }
    return CandidateRanking(by_category=ranked, excluded=tuple(excluded))


def eval_inception(
    cqs: Sequence[CompetencyQuery],
    ranking: CandidateRanking,
    thresholds: Thresholds | None = None,
) -> GateReport:
    """Gate eval_a: every shortlisted dataset must cover the queries, on both
    etypes and properties, at least to `cov_min`.

    An empty shortlist fails outright: nothing is reusable for this purpose.
    """
    thresholds = thresholds or Thresholds()
    items = []
    for entry in ranking.datasets():
        items.append((entry.resource_id, "etypes", entry.etype_coverage, REUSE_HINT))
        if entry.property_coverage is not None:
            items.append((entry.resource_id, "properties", entry.property_coverage, REUSE_HINT))
    notes = []
    if not items:
        notes.append("no dataset overlaps the competency queries; nothing can be reused")
    if not any(cq.property_pairs for cq in cqs):
        notes.append("competency queries declare no property pairs; property coverage not gated")
    return gate_from_results("eval_a", items, thresholds, notes=tuple(notes), empty_verdict="fail")


def ranking_to_json(ranking: CandidateRanking) -> dict:
    def entry_json(e: RankedResource) -> dict:
        out = {
            "id": e.resource_id,
            "kind": e.kind,
            "popularity": e.popularity,
            "etype_coverage": e.etype_coverage.to_json(),
            "property_coverage": e.property_coverage.to_json() if e.property_coverage else None,
        }
        return out

    return {
        "categories": {
            category: [entry_json(e) for e in ranking.by_category.get(category, ())]
            for category in CATEGORIES
        },
        "excluded": [{"id": rid, "reason": reason} for rid, reason in ranking.excluded],
    }


def ranking_from_json(doc: Mapping, catalog: ResourceCatalog) -> CandidateRanking:
    """Rebuild a ranking from its report form (used by later subcommands).

    Coverage results are reconstructed from the serialized fractions; entries
    whose resources are no longer in the catalog are dropped.
    """
    by_category: dict[str, tuple[RankedResource, ...]] = {}
    for category in CATEGORIES:
        entries = []
        for raw in doc.get("categories", {}).get(category, []):
            if raw["id"] not in catalog.resources:
                continue
            entries.append(
                RankedResource(
                    resource_id=str(raw["id"]),
                    kind=str(raw["kind"]),
                    category=category,
                    popularity=int(raw["popularity"]),
                    etype_coverage=_result_from_json(raw["etype_coverage"]),
                    property_coverage=(
                        _result_from_json(raw["property_coverage"])
                        if raw.get("property_coverage") is not None
                        else None
                    ),
                )
            )
        by_category[category] = tuple(entries)
    excluded = tuple((str(e["id"]), str(e["reason"])) for e in doc.get("excluded", []))
    return CandidateRanking(by_category=by_category, excluded=excluded)


def _result_from_json(raw: Mapping) -> MetricResult:
    return MetricResult(
        metric=str(raw["metric"]),
        alpha_size=int(raw["alpha_size"]),
        beta_size=int(raw["beta_size"]),
        intersection_size=int(raw["intersection_size"]),
        value=Fraction(int(raw["value"]["num"]), int(raw["value"]["den"])),
    )
