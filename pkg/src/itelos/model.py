"""Core graph model: schema graphs (ETGs), instance graphs (EGs), competency
queries, dataset schemas and resource catalog entries.

Every name that participates in matching or metrics is a :class:`Label` and is
compared by its normalized form, so results never depend on the spelling used
in a particular source file.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

PROPERTY_KINDS = ("data", "object")
DATATYPES = ("string", "integer", "decimal", "boolean", "date")
RESOURCE_KINDS = ("dataset", "ontology")
CATEGORIES = ("common", "core", "contextual")
COLUMN_ROLES = ("identity", "attribute", "link")


class ModelError(ValueError):
    """Invalid construction of a core model value."""


class EmptyLabelError(ModelError):
    """A label has no alphanumeric content left after normalization."""


class DocumentError(ModelError):
    """A schema-graph document does not follow the published format."""


# ---------------------------------------------------------------------------
# Labels


_NON_ALNUM_RUN = re.compile(r"[^a-z0-9]+")


def normalize_text(raw: str) -> str:
    """Lowercase, collapse runs of non-alphanumerics to one underscore, strip.

    Raises EmptyLabelError when nothing alphanumeric remains.
    """
    collapsed = _NON_ALNUM_RUN.sub("_", raw.lower()).strip("_")
    if not collapsed:
        raise EmptyLabelError(f"label {raw!r} has no alphanumeric content")
    return collapsed


def normalize_value(raw: str) -> str:
    """Canonical form of a cell value for equality checks: lowercased, with
    whitespace runs collapsed. Unlike labels, values may normalize to ''."""
    return " ".join(raw.split()).lower()


@dataclass(frozen=True)
class Label:
    """A raw name plus its canonical form; equality and hashing ignore `raw`."""

    raw: str = field(compare=False)
    normalized: str = ""

    def __post_init__(self) -> None:
        if not self.normalized or normalize_text(self.normalized) != self.normalized:
            raise ModelError(f"{self.normalized!r} is not a normalized label")

    def __str__(self) -> str:
        return self.normalized


def normalize_label(raw: Union[str, Label]) -> Label:
    """Build a Label from raw text (idempotent on already-built labels)."""
    if isinstance(raw, Label):
        return raw
    return Label(raw=raw, normalized=normalize_text(raw))


def compound_key(etype: Label, prop: Label) -> str:
    """Canonical "etype.property" key; labels never contain dots."""
    return f"{etype.normalized}.{prop.normalized}"


# ---------------------------------------------------------------------------
# Schema-level types


@dataclass(frozen=True)
class ResourceMeta:
    """Catalog entry describing where a resource sits in the reuse hierarchy."""

    id: str
    kind: str
    category: str
    popularity: int = 0
    origin: str = ""

    def __post_init__(self) -> None:
        if self.kind not in RESOURCE_KINDS:
            raise ModelError(f"unknown resource kind {self.kind!r}")
        if self.category not in CATEGORIES:
            raise ModelError(f"unknown category {self.category!r}")
        if self.popularity < 0:
            raise ModelError("popularity must be a non-negative integer")


@dataclass(frozen=True)
class PropertyDef:
    """A data or object property attached to an etype.

    Data properties carry a datatype (default string); object properties carry
    the etype label of their target range instead.
    """

    name: Label
    kind: str = "data"
    datatype: str | None = None
    range: Label | None = None

    def __post_init__(self) -> None:
        if self.kind not in PROPERTY_KINDS:
            raise ModelError(f"unknown property kind {self.kind!r}")
        if self.kind == "data":
            if self.range is not None:
                raise ModelError(f"data property {self.name} must not declare a range")
            if self.datatype is None:
                object.__setattr__(self, "datatype", "string")
            if self.datatype not in DATATYPES:
                raise ModelError(f"unknown datatype {self.datatype!r} on {self.name}")
        else:
            if self.datatype is not None:
                raise ModelError(f"object property {self.name} must not declare a datatype")
            if self.range is None:
                raise ModelError(f"object property {self.name} must declare a range etype")


@dataclass(frozen=True)
class ETG:
    """Entity Type Graph: etypes, their properties, and subclass edges."""

    id: str
    etypes: frozenset[Label]
    properties: Mapping[Label, tuple[PropertyDef, ...]]
    subclass_edges: frozenset[tuple[Label, Label]]
    meta: ResourceMeta

    def sorted_etypes(self) -> list[Label]:
        return sorted(self.etypes, key=lambda e: e.normalized)

    def props_of(self, etype: Label) -> tuple[PropertyDef, ...]:
        return self.properties.get(etype, ())

    def property_names(self, etype: Label) -> frozenset[str]:
        return frozenset(p.name.normalized for p in self.props_of(etype))

    def parents_of(self, etype: Label) -> list[Label]:
        return sorted(
            (p for c, p in self.subclass_edges if c == etype),
            key=lambda e: e.normalized,
        )

    def ancestors_of(self, etype: Label) -> list[Label]:
        """All transitive parents in deterministic (BFS, name-sorted) order."""
        seen: list[Label] = []
        queue = self.parents_of(etype)
        while queue:
            node = queue.pop(0)
            if node in seen or node == etype:
                continue
            seen.append(node)
            queue.extend(self.parents_of(node))
        return seen

    def declared_properties(self, etype: Label) -> dict[str, PropertyDef]:
        """Properties usable by entities of `etype`: own ones plus inherited.

        On a name clash the nearest declaration wins (own before ancestors).
        """
        declared: dict[str, PropertyDef] = {}
        for holder in [etype, *self.ancestors_of(etype)]:
            for prop in self.props_of(holder):
                declared.setdefault(prop.name.normalized, prop)
        return declared


# ---------------------------------------------------------------------------
# Instance-level types


@dataclass(frozen=True)
class Entity:
    """An instance node: typed, with sourced data values and object links.

    `data_values` maps a property to (value, source_dataset) pairs; duplicates
    of the exact same pair are never stored twice.  `object_links` holds
    (property, target entity id, source_dataset) triples.
    """

    id: str
    etype: Label
    data_values: Mapping[Label, tuple[tuple[str, str], ...]]
    object_links: frozenset[tuple[Label, str, str]]

    def value_texts(self, prop: Label) -> list[str]:
        return [v for v, _src in self.data_values.get(prop, ())]


@dataclass(frozen=True)
class EG:
    """Entity Graph: entities conforming to a schema ETG, keyed by id."""

    id: str
    schema: ETG
    entities: Mapping[str, Entity]
    conflict_flags: frozenset[tuple[str, Label]]

    def sorted_entities(self) -> list[Entity]:
        return [self.entities[k] for k in sorted(self.entities)]


# ---------------------------------------------------------------------------
# Purpose-side types


@dataclass(frozen=True)
class CompetencyQuery:
    """A formalized requirement: the etypes and (etype, property) pairs one
    query needs the final graph to answer for."""

    id: str
    sentence: str
    etypes: frozenset[Label]
    property_pairs: frozenset[tuple[Label, Label]]

    def __post_init__(self) -> None:
        if not self.etypes:
            raise ModelError(f"competency query {self.id!r} lists no etypes")
        for etype, prop in self.property_pairs:
            if etype not in self.etypes:
                raise ModelError(
                    f"competency query {self.id!r}: property {prop} names etype "
                    f"{etype} which is not in its etype list"
                )


@dataclass(frozen=True)
class Column:
    """One CSV column of a dataset schema and its (optional) property mapping."""

    name: Label
    mapped: Label | None = None
    role: str = "attribute"

    def __post_init__(self) -> None:
        if self.role not in COLUMN_ROLES:
            raise ModelError(f"unknown column role {self.role!r}")


@dataclass(frozen=True)
class DatasetSchema:
    """Schema of one tabular dataset: the etype its rows instantiate plus the
    column-to-property mapping declared by the catalog author."""

    dataset_id: str
    assigned_etype: Label
    columns: tuple[Column, ...]
    meta: ResourceMeta

    def __post_init__(self) -> None:
        identity = [c for c in self.columns if c.role == "identity"]
        if len(identity) > 1:
            raise ModelError(f"dataset {self.dataset_id!r} declares more than one identity column")
        names = [c.name.normalized for c in self.columns]
        if len(names) != len(set(names)):
            raise ModelError(f"dataset {self.dataset_id!r} has duplicate column names after normalization")
        for col in identity:
            if col.mapped is None:
                raise ModelError(
                    f"dataset {self.dataset_id!r}: identity column {col.name} must map to a property"
                )
        for col in self.columns:
            if col.role == "link" and col.mapped is None:
                raise ModelError(
                    f"dataset {self.dataset_id!r}: link column {col.name} must map to a property"
                )

    def identity_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.role == "identity")

    def mapped_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.mapped is not None)


# ---------------------------------------------------------------------------
# Element sets

ELEMENT_KINDS = ("etypes", "properties")

ElementSource = Union[ETG, DatasetSchema, Iterable[CompetencyQuery]]


@dataclass(frozen=True)
class ElementSet:
    """A homogeneous set of normalized element keys (etype names, or
    "etype.property" compound keys)."""

    kind: str
    members: frozenset[str]

    def __post_init__(self) -> None:
        if self.kind not in ELEMENT_KINDS:
            raise ModelError(f"unknown element kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.members)


def etype_elements(source: ElementSource) -> ElementSet:
    """Normalized etype labels mentioned by an ETG, a dataset schema, or a
    collection of competency queries."""
    if isinstance(source, ETG):
        members = frozenset(e.normalized for e in source.etypes)
    elif isinstance(source, DatasetSchema):
        members = frozenset({source.assigned_etype.normalized})
    else:
        members = frozenset(e.normalized for cq in source for e in cq.etypes)
    return ElementSet(kind="etypes", members=members)


def property_elements(source: ElementSource) -> ElementSet:
    """Compound "etype.property" keys; dataset schemas contribute only columns
    with a mapped property."""
    if isinstance(source, ETG):
        members = frozenset(
            compound_key(etype, p.name)
            for etype, props in source.properties.items()
            for p in props
        )
    elif isinstance(source, DatasetSchema):
        members = frozenset(
            compound_key(source.assigned_etype, col.mapped)
            for col in source.columns
            if col.mapped is not None
        )
    else:
        members = frozenset(
            compound_key(etype, prop)
            for cq in source
            for etype, prop in cq.property_pairs
        )
    return ElementSet(kind="properties", members=members)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by a validator; violations are data, not
    exceptions, so reports can list all of them at once."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def _subclass_cycles(edges: frozenset[tuple[Label, Label]]) -> list[tuple[Label, Label]]:
    """Edges that close a cycle in the child->parent graph, iterative DFS."""
    adjacency: dict[Label, list[Label]] = {}
    for child, parent in edges:
        adjacency.setdefault(child, []).append(parent)
    for targets in adjacency.values():
        targets.sort(key=lambda e: e.normalized)

    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[Label, int] = {}
    back_edges: list[tuple[Label, Label]] = []
    for start in sorted(adjacency, key=lambda e: e.normalized):
        if color.get(start, WHITE) != WHITE:
            continue
        stack: list[tuple[Label, int]] = [(start, 0)]
        color[start] = GREY
        while stack:
            node, idx = stack[-1]
            targets = adjacency.get(node, [])
            if idx < len(targets):
                stack[-1] = (node, idx + 1)
                nxt = targets[idx]
                state = color.get(nxt, WHITE)
                if state == GREY:
                    back_edges.append((node, nxt))
                elif state == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, 0))
            else:
                color[node] = BLACK
                stack.pop()
    return back_edges


def validate_etg(g: ETG) -> list[Violation]:
    """Check every ETG invariant; an empty report means the graph is valid."""
    out: list[Violation] = []
    for etype in sorted(g.properties, key=lambda e: e.normalized):
        if etype not in g.etypes:
            out.append(Violation("unknown_property_etype", f"properties declared for unknown etype {etype}"))
        names = [p.name.normalized for p in g.properties[etype]]
        for name in sorted(set(n for n in names if names.count(n) > 1)):
            out.append(Violation("duplicate_property", f"etype {etype} declares property {name} more than once"))
        for prop in g.properties[etype]:
            if prop.kind == "object" and prop.range not in g.etypes:
                out.append(
                    Violation("dangling_range", f"object property {etype}.{prop.name} targets unknown etype {prop.range}")
                )
    for child, parent in sorted(g.subclass_edges, key=lambda e: (e[0].normalized, e[1].normalized)):
        for end in (child, parent):
            if end not in g.etypes:
                out.append(Violation("dangling_subclass", f"subclass edge ({child}, {parent}) references unknown etype {end}"))
    for child, parent in _subclass_cycles(g.subclass_edges):
        out.append(Violation("subclass_cycle", f"subclass edge ({child}, {parent}) closes a cycle"))
    return out


def validate_eg(eg: EG) -> list[Violation]:
    """Check every EG invariant against its schema; empty report means valid."""
    out: list[Violation] = []
    for entity in eg.sorted_entities():
        if entity.etype not in eg.schema.etypes:
            out.append(Violation("unknown_etype", f"entity {entity.id} has unknown etype {entity.etype}"))
            continue
        declared = eg.schema.declared_properties(entity.etype)
        for prop in sorted(entity.data_values, key=lambda p: p.normalized):
            pairs = entity.data_values[prop]
            if not pairs:
                out.append(Violation("empty_value_list", f"entity {entity.id} has an empty value list for {prop}"))
            pdef = declared.get(prop.normalized)
            if pdef is None or pdef.kind != "data":
                out.append(Violation("undeclared_property", f"entity {entity.id} uses undeclared data property {prop}"))
        for prop, target, _src in sorted(
            entity.object_links, key=lambda l: (l[0].normalized, l[1], l[2])
        ):
            pdef = declared.get(prop.normalized)
            if pdef is None or pdef.kind != "object":
                out.append(Violation("undeclared_property", f"entity {entity.id} uses undeclared link property {prop}"))
            if target not in eg.entities:
                out.append(Violation("dangling_link", f"entity {entity.id} links to missing entity {target!r} via {prop}"))
    for entity_id, prop in sorted(eg.conflict_flags, key=lambda f: (f[0], f[1].normalized)):
        entity = eg.entities.get(entity_id)
        values = entity.value_texts(prop) if entity is not None else []
        distinct = {normalize_value(v) for v in values if v.strip()}
        if len(distinct) < 2:
            out.append(
                Violation("stale_conflict_flag", f"conflict flag ({entity_id}, {prop}) has fewer than two distinct values")
            )
    return out


# ---------------------------------------------------------------------------
# Schema-graph documents (JSON)


def _require(doc: Mapping, key: str, where: str):
    if key not in doc:
        raise DocumentError(f"{where}: missing required key {key!r}")
    return doc[key]


def etg_from_doc(doc: Mapping, *, meta: ResourceMeta | None = None) -> ETG:
    """Build an ETG from its JSON document form.

    `meta` overrides the document's own `meta` block; catalog metadata given in
    a purpose file wins over what the schema file says about itself.
    """
    graph_id = str(_require(doc, "id", "document"))
    if meta is None:
        raw_meta = _require(doc, "meta", graph_id)
        meta = ResourceMeta(
            id=graph_id,
            kind="ontology",
            category=str(_require(raw_meta, "category", f"{graph_id}.meta")),
            popularity=int(raw_meta.get("popularity", 0)),
            origin=str(raw_meta.get("origin", "")),
        )
    etypes = frozenset(normalize_label(str(e)) for e in _require(doc, "etypes", graph_id))
    properties: dict[Label, tuple[PropertyDef, ...]] = {}
    for raw_etype, raw_props in sorted(dict(doc.get("properties", {})).items()):
        etype = normalize_label(str(raw_etype))
        defs = []
        for raw in raw_props:
            name = normalize_label(str(_require(raw, "name", f"{graph_id}.properties.{raw_etype}")))
            kind = str(raw.get("kind", "data"))
            rng = raw.get("range")
            defs.append(
                PropertyDef(
                    name=name,
                    kind=kind,
                    datatype=str(raw["datatype"]) if raw.get("datatype") is not None else None,
                    range=normalize_label(str(rng)) if rng is not None else None,
                )
            )
        properties[etype] = tuple(sorted(defs, key=lambda p: p.name.normalized))
    subclass = frozenset(
        (normalize_label(str(child)), normalize_label(str(parent)))
        for child, parent in doc.get("subclass", [])
    )
    return ETG(id=graph_id, etypes=etypes, properties=properties, subclass_edges=subclass, meta=meta)


def etg_to_doc(g: ETG) -> dict:
    """Serialize an ETG to its canonical (sorted, normalized) document form."""
    properties = {}
    for etype in sorted(g.properties, key=lambda e: e.normalized):
        serialized = []
        for p in sorted(g.props_of(etype), key=lambda p: p.name.normalized):
            entry: dict[str, str] = {"name": p.name.normalized, "kind": p.kind}
            if p.kind == "data":
                entry["datatype"] = p.datatype or "string"
            else:
                entry["range"] = p.range.normalized if p.range else ""
            serialized.append(entry)
        properties[etype.normalized] = serialized
    return {
        "id": g.id,
        "meta": {"category": g.meta.category, "popularity": g.meta.popularity, "origin": g.meta.origin},
        "etypes": [e.normalized for e in g.sorted_etypes()],
        "properties": properties,
        "subclass": sorted(
            [c.normalized, p.normalized] for c, p in g.subclass_edges
        ),
    }


def load_etg(path: Path, *, meta: ResourceMeta | None = None) -> ETG:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise DocumentError(f"{path}: document root must be an object")
    return etg_from_doc(doc, meta=meta)


def dump_etg(g: ETG, path: Path) -> None:
    path.write_text(json.dumps(etg_to_doc(g), indent=2, sort_keys=True) + "\n", encoding="utf-8")
