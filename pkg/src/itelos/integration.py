"""Phase 4, data integration: map dataset columns onto the final graph, mint
entities row by row, merge duplicates, resolve cross-dataset links, and gate
on query coverage (eval_d).

Merging is order independent: the surviving id of a merged entity is the
lexicographically smallest one, and unresolved links are retried after every
merge, so integrating datasets in a different order yields the same graph.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from datetime import date
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence
from urllib.parse import quote

from .alignment import name_similarity
from .metrics import (
    GateReport,
    Thresholds,
    coverage,
    fraction_json,
    gate_from_results,
)
from .model import (
    CompetencyQuery,
    EG,
    ETG,
    ElementSet,
    EmptyLabelError,
    Entity,
    DatasetSchema,
    DocumentError,
    Label,
    ModelError,
    normalize_label,
    normalize_text,
    normalize_value,
)

# Minimum name similarity for mapping an undeclared column onto a property.
INFER_THRESHOLD = Fraction(7, 10)

MISSING_HINT = "a query element is not populated by any integrated entity"


class IntegrationError(ModelError):
    """Dataset rows cannot be turned into graph entities."""


class RowArityError(IntegrationError):
    """A data row does not have the same number of fields as the header."""


class MappingError(IntegrationError):
    """A column mapping names an unknown or incompatible target."""


class UnknownEtypeError(MappingError):
    """The dataset's etype does not occur in the final graph."""


def read_dataset_rows(path: Path) -> tuple[list[Label], list[list[str]]]:
    """Read a CSV dataset: normalized header labels plus stripped cell rows."""
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DocumentError(f"{path}: dataset file has no header row")
        labels = [normalize_label(name) for name in header]
        rows = []
        for row in reader:
            if len(row) != len(header):
                raise RowArityError(
                    f"{path.name}: line {reader.line_num}: expected "
                    f"{len(header)} fields, got {len(row)}"
                )
            rows.append([cell.strip() for cell in row])
    return labels, rows


# ---------------------------------------------------------------------------
# Column mapping


@dataclass(frozen=True)
class MappingOverride:
    """Author-supplied replacement for the inferred column mapping."""

    dataset_id: str
    columns: Mapping[str, tuple[Label, Label] | None]
    identity_key: tuple[Label, ...]


def override_from_doc(doc: Mapping) -> MappingOverride:
    if "dataset_id" not in doc:
        raise DocumentError("mapping override: missing 'dataset_id'")
    columns: dict[str, tuple[Label, Label] | None] = {}
    for raw_name, spec in doc.get("columns", {}).items():
        name = normalize_text(str(raw_name))
        if spec == "drop":
            columns[name] = None
        else:
            try:
                etype, prop = spec
            except (TypeError, ValueError):
                raise DocumentError(
                    f"mapping override: column {raw_name!r} must map to "
                    f"[etype, property] or \"drop\""
                ) from None
            columns[name] = (normalize_label(str(etype)), normalize_label(str(prop)))
    identity = tuple(normalize_label(str(c)) for c in doc.get("identity_key", []))
    return MappingOverride(
        dataset_id=str(doc["dataset_id"]), columns=columns, identity_key=identity
    )


@dataclass(frozen=True)
class SchemaMapping:
    """Resolved column-to-property mapping of one dataset against the final
    graph. `columns` follows header order; None means the column is dropped."""

    dataset_id: str
    etype: Label
    columns: tuple[tuple[Label, Label | None], ...]
    identity_columns: tuple[Label, ...]
    dropped: tuple[tuple[str, str], ...] = ()

    def property_of(self, column: Label) -> Label | None:
        for name, prop in self.columns:
            if name == column:
                return prop
        return None


def infer_mapping(
    schema: DatasetSchema,
    etg: ETG,
    *,
    rename_map: Mapping[str, str] | None = None,
    override: MappingOverride | None = None,
) -> SchemaMapping:
    """Resolve every dataset column to a property of the final graph.

    Columns the sidecar schema maps explicitly are taken as-is; the rest are
    matched to declared property names by similarity, or dropped. An override
    file replaces the whole mapping, including the identity key.
    """
    rename_map = rename_map or {}
    etype_name = schema.assigned_etype.normalized
    etype = normalize_label(rename_map.get(etype_name, etype_name))
    if etype not in etg.etypes:
        raise UnknownEtypeError(
            f"dataset {schema.dataset_id!r}: etype {etype} is not part of the final graph"
        )
    declared = etg.declared_properties(etype)

    if override is not None:
        if override.dataset_id != schema.dataset_id:
            raise MappingError(
                f"override is for dataset {override.dataset_id!r}, "
                f"not {schema.dataset_id!r}"
            )
        columns = []
        dropped = []
        for column in schema.columns:
            spec = override.columns.get(column.name.normalized)
            if spec is None:
                reason = (
                    "dropped by override"
                    if column.name.normalized in override.columns
                    else "not mentioned by override"
                )
                columns.append((column.name, None))
                dropped.append((column.name.normalized, reason))
                continue
            target_etype, prop = spec
            resolved = rename_map.get(target_etype.normalized, target_etype.normalized)
            if resolved != etype.normalized:
                raise MappingError(
                    f"dataset {schema.dataset_id!r}: column {column.name} mapped "
                    f"into etype {target_etype}, which is not this dataset's etype"
                )
            if prop.normalized not in declared:
                raise MappingError(
                    f"dataset {schema.dataset_id!r}: column {column.name} mapped to "
                    f"undeclared property {etype}.{prop}"
                )
            columns.append((column.name, prop))
        by_name = dict(columns)
        for key_column in override.identity_key:
            if by_name.get(key_column) is None:
                raise MappingError(
                    f"dataset {schema.dataset_id!r}: identity column {key_column} "
                    f"is not mapped to a property"
                )
        return SchemaMapping(
            dataset_id=schema.dataset_id,
            etype=etype,
            columns=tuple(columns),
            identity_columns=override.identity_key,
            dropped=tuple(dropped),
        )

    taken = set()
    for column in schema.mapped_columns():
        if column.mapped.normalized not in declared:
            raise MappingError(
                f"dataset {schema.dataset_id!r}: column {column.name} mapped to "
                f"undeclared property {etype}.{column.mapped}"
            )
        taken.add(column.mapped.normalized)
    columns = []
    dropped = []
    for column in schema.columns:
        if column.mapped is not None:
            columns.append((column.name, column.mapped))
            continue
        best: tuple[str, Fraction] | None = None
        for prop_name in sorted(declared):
            if prop_name in taken:
                continue
            similarity = name_similarity(column.name.normalized, prop_name)
            if similarity >= INFER_THRESHOLD and (best is None or similarity > best[1]):
                best = (prop_name, similarity)
        if best is not None:
            taken.add(best[0])
            columns.append((column.name, normalize_label(best[0])))
        else:
            columns.append((column.name, None))
            dropped.append((column.name.normalized, "no matching property"))
    return SchemaMapping(
        dataset_id=schema.dataset_id,
        etype=etype,
        columns=tuple(columns),
        identity_columns=tuple(c.name for c in schema.identity_columns()),
        dropped=tuple(dropped),
    )


# ---------------------------------------------------------------------------
# Entity generation


@dataclass(frozen=True)
class PendingLink:
    """An object-property cell whose target entity has not appeared yet."""

    source_id: str
    property: Label
    target_text: str
    dataset_id: str

    def sort_key(self):
        return (self.source_id, self.property.normalized, self.target_text, self.dataset_id)


@dataclass(frozen=True)
class Fragment:
    """The entities minted from one dataset, before merging."""

    eg: EG
    pending_links: tuple[PendingLink, ...]
    identity_properties: tuple[str, ...]
    stats: Mapping[str, int]


def generate_entities(
    mapping: SchemaMapping,
    header: Sequence[Label],
    rows: Sequence[Sequence[str]],
    schema_graph: ETG,
) -> Fragment:
    """Mint one entity per distinct identity key.

    The key is the normalized identity-column value (composite keys joined
    with underscores); rows without a usable key get their ordinal instead.
    Rows that are entirely empty are skipped. The same (value, source) pair
    is never stored twice on a property.
    """
    index_of = {label.normalized: i for i, label in enumerate(header)}
    for column, _prop in mapping.columns:
        if column.normalized not in index_of:
            raise MappingError(
                f"dataset {mapping.dataset_id!r}: mapped column {column} is not in the header"
            )
    declared = schema_graph.declared_properties(mapping.etype)
    key_indexes = [index_of[c.normalized] for c in mapping.identity_columns]

    values: dict[str, dict[Label, list[tuple[str, str]]]] = {}
    pending: dict[tuple[str, str, str, str], PendingLink] = {}
    data_cells = 0
    skipped = 0
    for ordinal, row in enumerate(rows, start=1):
        if all(cell == "" for cell in row):
            skipped += 1
            continue
        key = None
        key_cells = [row[i] for i in key_indexes]
        if key_cells and all(cell for cell in key_cells):
            try:
                key = "_".join(normalize_text(cell) for cell in key_cells)
            except EmptyLabelError:
                key = None
        if key is None:
            key = f"row_{ordinal}"
        entity_id = f"{mapping.dataset_id}/{key}"
        bucket = values.setdefault(entity_id, {})
        for column, prop in mapping.columns:
            if prop is None:
                continue
            cell = row[index_of[column.normalized]]
            if cell == "":
                continue
            definition = declared[prop.normalized]
            if definition.kind == "object":
                link = PendingLink(
                    source_id=entity_id,
                    property=prop,
                    target_text=cell,
                    dataset_id=mapping.dataset_id,
                )
                pending.setdefault(link.sort_key(), link)
            else:
                pair = (cell, mapping.dataset_id)
                series = bucket.setdefault(prop, [])
                if pair not in series:
                    series.append(pair)
                data_cells += 1

    entities = {
        entity_id: Entity(
            id=entity_id,
            etype=mapping.etype,
            data_values={p: tuple(pairs) for p, pairs in bucket.items()},
            object_links=frozenset(),
        )
        for entity_id, bucket in values.items()
    }
    flags = _conflict_flags(entities)
    fragment_eg = EG(
        id=f"{mapping.dataset_id}-fragment",
        schema=schema_graph,
        entities=entities,
        conflict_flags=flags,
    )
    identity_props = tuple(
        mapping.property_of(c).normalized for c in mapping.identity_columns
    )
    stats = {
        "rows": len(rows),
        "skipped_empty_rows": skipped,
        "entities": len(entities),
        "data_cells": data_cells,
        "dropped_columns": len(mapping.dropped),
    }
    return Fragment(
        eg=fragment_eg,
        pending_links=tuple(sorted(pending.values(), key=PendingLink.sort_key)),
        identity_properties=identity_props,
        stats=stats,
    )


def _conflict_flags(entities: Mapping[str, Entity]) -> frozenset[tuple[str, Label]]:
    flags = set()
    for entity in entities.values():
        for prop, pairs in entity.data_values.items():
            distinct = {normalize_value(v) for v, _src in pairs if v.strip()}
            if len(distinct) >= 2:
                flags.add((entity.id, prop))
    return frozenset(flags)


# ---------------------------------------------------------------------------
# Matching and merging


def _value_set(entity: Entity, prop: Label) -> frozenset[str]:
    return frozenset(normalize_value(v) for v in entity.value_texts(prop) if v.strip())


def _same_entity(existing: Entity, candidate: Entity, key_props: Sequence[Label]) -> bool:
    """Identity decision for two same-etype entities.

    When both sides carry every key property the keys alone decide; otherwise
    the entities must agree on every property they share, and share at least
    one.
    """
    if key_props and all(
        _value_set(existing, p) and _value_set(candidate, p) for p in key_props
    ):
        return all(_value_set(existing, p) == _value_set(candidate, p) for p in key_props)
    shared = [
        p
        for p in sorted(set(existing.data_values) & set(candidate.data_values), key=str)
        if _value_set(existing, p) and _value_set(candidate, p)
    ]
    if not shared:
        return False
    return all(_value_set(existing, p) == _value_set(candidate, p) for p in shared)


def match_entities(eg: EG, fragment: Fragment) -> dict[str, str]:
    """Pair each fragment entity with the first existing entity it denotes.

    An id collision is always a match; otherwise candidates of the same etype
    are tried in id order.
    """
    key_props = [normalize_label(p) for p in fragment.identity_properties]
    by_etype: dict[Label, list[Entity]] = {}
    for entity in eg.sorted_entities():
        by_etype.setdefault(entity.etype, []).append(entity)
    matches: dict[str, str] = {}
    for candidate in fragment.eg.sorted_entities():
        if candidate.id in eg.entities:
            matches[candidate.id] = candidate.id
            continue
        for existing in by_etype.get(candidate.etype, ()):
            if _same_entity(existing, candidate, key_props):
                matches[candidate.id] = existing.id
                break
    return matches


def _merge_values(
    first: Mapping[Label, tuple[tuple[str, str], ...]],
    second: Mapping[Label, tuple[tuple[str, str], ...]],
) -> dict[Label, tuple[tuple[str, str], ...]]:
    merged = {p: list(pairs) for p, pairs in first.items()}
    for prop, pairs in second.items():
        series = merged.setdefault(prop, [])
        for pair in pairs:
            if pair not in series:
                series.append(pair)
    return {p: tuple(pairs) for p, pairs in merged.items()}


def merge_entities(
    eg: EG, fragment: Fragment, matches: Mapping[str, str]
) -> tuple[EG, dict[str, str]]:
    """Fold the fragment into the graph, collapsing matched pairs.

    The merged entity keeps the lexicographically smallest of the two ids;
    the returned remap records every id that changed, so callers can rewrite
    references they hold outside the graph.
    """
    remap: dict[str, str] = {}
    for fragment_id, existing_id in matches.items():
        merged_id = min(fragment_id, existing_id)
        if existing_id != merged_id:
            remap[existing_id] = merged_id
        if fragment_id != merged_id:
            remap[fragment_id] = merged_id

    def target(entity_id: str) -> str:
        return remap.get(entity_id, entity_id)

    combined: dict[str, Entity] = {}

    def fold(entity: Entity) -> None:
        new_id = target(entity.id)
        present = combined.get(new_id)
        if present is None:
            combined[new_id] = Entity(
                id=new_id,
                etype=entity.etype,
                data_values=dict(entity.data_values),
                object_links=entity.object_links,
            )
        else:
            combined[new_id] = Entity(
                id=new_id,
                etype=present.etype,
                data_values=_merge_values(present.data_values, entity.data_values),
                object_links=present.object_links | entity.object_links,
            )

    for entity in eg.sorted_entities():
        fold(entity)
    for entity in fragment.eg.sorted_entities():
        fold(entity)

    entities = {
        entity_id: Entity(
            id=entity_id,
            etype=entity.etype,
            data_values=entity.data_values,
            object_links=frozenset(
                (prop, target(link_target), source)
                for prop, link_target, source in entity.object_links
            ),
        )
        for entity_id, entity in combined.items()
    }
    merged_eg = EG(
        id=eg.id,
        schema=eg.schema,
        entities=entities,
        conflict_flags=_conflict_flags(entities),
    )
    return merged_eg, remap


# ---------------------------------------------------------------------------
# Link resolution


@dataclass(frozen=True)
class IntegrationState:
    """The growing graph plus the links still waiting for their targets."""

    eg: EG
    pending: tuple[PendingLink, ...]


def initial_state(schema_graph: ETG, graph_id: str) -> IntegrationState:
    empty = EG(id=graph_id, schema=schema_graph, entities={}, conflict_flags=frozenset())
    return IntegrationState(eg=empty, pending=())


def _conforms(schema_graph: ETG, etype: Label, range_etype: Label) -> bool:
    return etype == range_etype or range_etype in schema_graph.ancestors_of(etype)


def resolve_pending(state: IntegrationState) -> tuple[IntegrationState, int]:
    """Retry every pending link against the current graph.

    A link resolves to an exact entity id, or else to the entity of the
    declared range etype whose id suffix equals the normalized target text;
    ties go to the smallest id. Unresolved links stay pending and are never
    written into the graph.
    """
    eg = state.eg
    added: dict[str, set[tuple[Label, str, str]]] = {}
    still: list[PendingLink] = []
    resolved = 0
    for link in sorted(state.pending, key=PendingLink.sort_key):
        source = eg.entities.get(link.source_id)
        declared = (
            eg.schema.declared_properties(source.etype).get(link.property.normalized)
            if source is not None
            else None
        )
        if declared is None or declared.kind != "object":
            still.append(link)
            continue
        range_etype = declared.range
        target_id = None
        exact = eg.entities.get(link.target_text)
        if exact is not None and _conforms(eg.schema, exact.etype, range_etype):
            target_id = exact.id
        else:
            try:
                key = normalize_text(link.target_text)
            except EmptyLabelError:
                key = None
            if key is not None:
                candidates = [
                    entity_id
                    for entity_id, entity in eg.entities.items()
                    if _conforms(eg.schema, entity.etype, range_etype)
                    and entity_id.rpartition("/")[2] == key
                ]
                if candidates:
                    target_id = min(candidates)
        if target_id is None:
            still.append(link)
            continue
        added.setdefault(link.source_id, set()).add(
            (link.property, target_id, link.dataset_id)
        )
        resolved += 1
    if not added:
        return IntegrationState(eg=eg, pending=tuple(still)), 0
    entities = dict(eg.entities)
    for entity_id, links in added.items():
        entity = entities[entity_id]
        entities[entity_id] = Entity(
            id=entity.id,
            etype=entity.etype,
            data_values=entity.data_values,
            object_links=entity.object_links | links,
        )
    new_eg = EG(
        id=eg.id, schema=eg.schema, entities=entities, conflict_flags=eg.conflict_flags
    )
    return IntegrationState(eg=new_eg, pending=tuple(still)), resolved


# ---------------------------------------------------------------------------
# One dataset, end to end


@dataclass(frozen=True)
class IntegrationCaseReport:
    """Forensic summary of integrating one dataset into the graph.

    `case` says whether the dataset's etype was already populated;
    `entity_overlap` whether any of its entities denoted ones already there.
    """

    dataset_id: str
    etype: str
    case: str
    entity_overlap: str
    entities_before: int
    entities_after: int
    appended: int
    merged_entities: int
    conflicts: int
    components_before: int
    connected_components: int
    missing_link_ratio: Fraction
    unresolved_links: tuple[PendingLink, ...]
    stats: Mapping[str, int]

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "etype": self.etype,
            "case": self.case,
            "entity_overlap": self.entity_overlap,
            "entities_before": self.entities_before,
            "entities_after": self.entities_after,
            "appended": self.appended,
            "merged_entities": self.merged_entities,
            "conflicts": self.conflicts,
            "components_before": self.components_before,
            "connected_components": self.connected_components,
            "missing_link_ratio": fraction_json(self.missing_link_ratio),
            "unresolved_links": [
                {
                    "source": link.source_id,
                    "property": link.property.normalized,
                    "target": link.target_text,
                    "dataset": link.dataset_id,
                }
                for link in self.unresolved_links
            ],
            "stats": dict(sorted(self.stats.items())),
        }


def connected_components(eg: EG) -> int:
    """Number of weakly connected components, links taken as undirected."""
    parent = {entity_id: entity_id for entity_id in eg.entities}

    def find(node: str) -> str:
        root = node
        while parent[root] != root:
            root = parent[root]
        while parent[node] != root:
            parent[node], node = root, parent[node]
        return root

    for entity in eg.entities.values():
        for _prop, target, _source in entity.object_links:
            if target in parent:
                left, right = find(entity.id), find(target)
                if left != right:
                    parent[max(left, right)] = min(left, right)
    return len({find(node) for node in parent})


def missing_ratio(eg: EG) -> Fraction:
    """Share of (entity, declared property) pairs with no value or link."""
    total = 0
    missing = 0
    for entity in eg.sorted_entities():
        declared = eg.schema.declared_properties(entity.etype)
        linked = {prop.normalized for prop, _t, _s in entity.object_links}
        for prop_name, definition in sorted(declared.items()):
            total += 1
            if definition.kind == "object":
                populated = prop_name in linked
            else:
                populated = any(
                    v.strip() for v in entity.value_texts(normalize_label(prop_name))
                )
            if not populated:
                missing += 1
    if total == 0:
        return Fraction(0)
    return Fraction(missing, total)


def integrate_dataset(
    state: IntegrationState,
    mapping: SchemaMapping,
    header: Sequence[Label],
    rows: Sequence[Sequence[str]],
) -> tuple[IntegrationState, IntegrationCaseReport]:
    """Run one dataset through generation, matching, merging and resolution."""
    before = state.eg
    fragment = generate_entities(mapping, header, rows, before.schema)
    matches = match_entities(before, fragment)
    merged_eg, remap = merge_entities(before, fragment, matches)
    carried = [
        PendingLink(
            source_id=remap.get(link.source_id, link.source_id),
            property=link.property,
            target_text=link.target_text,
            dataset_id=link.dataset_id,
        )
        for link in state.pending + fragment.pending_links
    ]
    deduped = {link.sort_key(): link for link in carried}
    resolved_state, _count = resolve_pending(
        IntegrationState(eg=merged_eg, pending=tuple(deduped.values()))
    )
    after = resolved_state.eg

    touched = sum(
        1
        for entity in after.entities.values()
        if any(
            source == mapping.dataset_id
            for pairs in entity.data_values.values()
            for _v, source in pairs
        )
        or any(source == mapping.dataset_id for _p, _t, source in entity.object_links)
    )
    appended = len(after.entities) - len(before.entities)
    merged_count = touched - appended
    case = (
        "shared_etype"
        if any(entity.etype == mapping.etype for entity in before.entities.values())
        else "new_etype"
    )
    report = IntegrationCaseReport(
        dataset_id=mapping.dataset_id,
        etype=mapping.etype.normalized,
        case=case,
        entity_overlap="populates_both" if merged_count >= 1 else "only_one",
        entities_before=len(before.entities),
        entities_after=len(after.entities),
        appended=appended,
        merged_entities=merged_count,
        conflicts=len(after.conflict_flags) - len(before.conflict_flags),
        components_before=connected_components(before),
        connected_components=connected_components(after),
        missing_link_ratio=missing_ratio(after),
        unresolved_links=tuple(sorted(resolved_state.pending, key=PendingLink.sort_key)),
        stats=fragment.stats,
    )
    return resolved_state, report


# ---------------------------------------------------------------------------
# Purpose evaluation (eval_d)


def _populated_elements(eg: EG) -> tuple[set[str], set[str]]:
    etypes: set[str] = set()
    props: set[str] = set()
    for entity in eg.entities.values():
        lineage = [entity.etype, *eg.schema.ancestors_of(entity.etype)]
        populated = {
            prop.normalized
            for prop, pairs in entity.data_values.items()
            if any(v.strip() for v, _s in pairs)
        }
        populated |= {prop.normalized for prop, _t, _s in entity.object_links}
        for holder in lineage:
            etypes.add(holder.normalized)
            for prop_name in populated:
                props.add(f"{holder.normalized}.{prop_name}")
    return etypes, props


def eval_purpose(
    eg: EG,
    cqs: Sequence[CompetencyQuery],
    rename_map: Mapping[str, str] | None = None,
    thresholds: Thresholds | None = None,
) -> GateReport:
    """Gate eval_d: every element a query asks for must be populated.

    Entities count for their etype and all its ancestors, so a query stated
    against a superclass is satisfied by subclass instances. Query names are
    translated through the alignment rename map first.
    """
    rename_map = rename_map or {}
    thresholds = thresholds or Thresholds()
    populated_etypes, populated_props = _populated_elements(eg)

    def final_name(label: Label) -> str:
        return rename_map.get(label.normalized, label.normalized)

    items = []
    for cq in cqs:
        alpha = frozenset(final_name(e) for e in cq.etypes)
        result = coverage(
            ElementSet(kind="etypes", members=alpha),
            ElementSet(kind="etypes", members=frozenset(populated_etypes)),
        )
        missing = sorted(alpha - populated_etypes)
        note = f"missing: {', '.join(missing)}" if missing else MISSING_HINT
        items.append((cq.id, "etypes", result, note))
        if cq.property_pairs:
            alpha_pairs = frozenset(
                f"{final_name(etype)}.{prop.normalized}"
                for etype, prop in cq.property_pairs
            )
            result = coverage(
                ElementSet(kind="properties", members=alpha_pairs),
                ElementSet(kind="properties", members=frozenset(populated_props)),
            )
            missing = sorted(alpha_pairs - populated_props)
            note = f"missing: {', '.join(missing)}" if missing else MISSING_HINT
            items.append((cq.id, "properties", result, note))
    return gate_from_results("eval_d", items, thresholds, empty_verdict="fail")


# ---------------------------------------------------------------------------
# Export


_RDF_TYPE = "<http://www.w3.org/1999/02/22-rdf-syntax-ns#type>"
_XSD = "http://www.w3.org/2001/XMLSchema#"
_INTEGER_RE = re.compile(r"[+-]?[0-9]+\Z")
_DECIMAL_RE = re.compile(r"[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)\Z")

_LITERAL_ESCAPES = {
    "\\": "\\\\",
    '"': '\\"',
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def _escape_literal(text: str) -> str:
    return "".join(_LITERAL_ESCAPES.get(ch, ch) for ch in text)


def _iri(text: str) -> str:
    return f"<{quote(text, safe=':/_-.~')}>"


def _valid_for(datatype: str, text: str) -> bool:
    if datatype == "integer":
        return _INTEGER_RE.match(text) is not None
    if datatype == "decimal":
        return _DECIMAL_RE.match(text) is not None
    if datatype == "boolean":
        return text in ("true", "false")
    if datatype == "date":
        try:
            date.fromisoformat(text)
        except ValueError:
            return False
        return True
    return True


def export_eg(eg: EG, path: Path) -> list[str]:
    """Write the graph as sorted N-Triples; returns warnings for values that
    did not parse under their declared datatype and fell back to plain text."""
    lines: set[str] = set()
    warnings: list[str] = []
    for entity in eg.sorted_entities():
        subject = _iri(f"urn:itelos:{eg.id}:{entity.id}")
        etype_iri = _iri(f"urn:itelos:etg:{entity.etype.normalized}")
        lines.add(f"{subject} {_RDF_TYPE} {etype_iri} .")
        declared = eg.schema.declared_properties(entity.etype)
        for prop in sorted(entity.data_values, key=lambda p: p.normalized):
            predicate = _iri(f"urn:itelos:etg:{prop.normalized}")
            definition = declared.get(prop.normalized)
            datatype = definition.datatype if definition and definition.kind == "data" else "string"
            for value, _source in entity.data_values[prop]:
                literal = f'"{_escape_literal(value)}"'
                if datatype != "string":
                    if _valid_for(datatype, value):
                        literal = f"{literal}^^<{_XSD}{datatype}>"
                    else:
                        warnings.append(
                            f"{entity.id}: value {value!r} for {prop} is not a valid "
                            f"{datatype}; exported as a plain string"
                        )
                lines.add(f"{subject} {predicate} {literal} .")
        for prop, target, _source in sorted(
            entity.object_links, key=lambda l: (l[0].normalized, l[1], l[2])
        ):
            predicate = _iri(f"urn:itelos:etg:{prop.normalized}")
            target_iri = _iri(f"urn:itelos:{eg.id}:{target}")
            lines.add(f"{subject} {predicate} {target_iri} .")
    body = "\n".join(sorted(lines))
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"{body}\n" if body else "")
    return warnings
