"""Shared builders and independent oracles for the test suite.

The oracles here deliberately re-derive results from first principles (plain
set arithmetic, breadth-first traversal) so the production code is checked
against a second, simpler implementation.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from pathlib import Path

from itelos.model import (
    ETG,
    CompetencyQuery,
    Column,
    DatasetSchema,
    PropertyDef,
    ResourceMeta,
    normalize_label,
)

FIXTURES = Path(__file__).parent / "fixtures"
COVID = FIXTURES / "covid_trentino"


def make_etg(
    graph_id,
    etypes,
    properties=None,
    subclass=(),
    category="core",
    popularity=0,
    kind="ontology",
):
    """ETG from plain strings; properties maps etype -> list of specs, where a
    spec is a name or a (name, kind, datatype_or_range) tuple."""
    props = {}
    for etype, specs in (properties or {}).items():
        defs = []
        for spec in specs:
            if isinstance(spec, str):
                defs.append(PropertyDef(name=normalize_label(spec)))
            else:
                name, prop_kind, extra = spec
                if prop_kind == "object":
                    defs.append(
                        PropertyDef(
                            name=normalize_label(name),
                            kind="object",
                            range=normalize_label(extra),
                        )
                    )
                else:
                    defs.append(
                        PropertyDef(name=normalize_label(name), datatype=extra)
                    )
        props[normalize_label(etype)] = tuple(defs)
    return ETG(
        id=graph_id,
        etypes=frozenset(normalize_label(e) for e in etypes),
        properties=props,
        subclass_edges=frozenset(
            (normalize_label(c), normalize_label(p)) for c, p in subclass
        ),
        meta=ResourceMeta(id=graph_id, kind=kind, category=category, popularity=popularity),
    )


def make_cq(cq_id, etypes, pairs=()):
    return CompetencyQuery(
        id=cq_id,
        sentence="",
        etypes=frozenset(normalize_label(e) for e in etypes),
        property_pairs=frozenset(
            (normalize_label(e), normalize_label(p)) for e, p in pairs
        ),
    )


def make_schema(dataset_id, etype, columns, category="core", popularity=0):
    """DatasetSchema from (name, mapped_or_None, role) triples or plain names
    (mapped to themselves as attributes)."""
    cols = []
    for spec in columns:
        if isinstance(spec, str):
            cols.append(Column(name=normalize_label(spec), mapped=normalize_label(spec)))
        else:
            name, mapped, role = spec
            cols.append(
                Column(
                    name=normalize_label(name),
                    mapped=normalize_label(mapped) if mapped is not None else None,
                    role=role,
                )
            )
    return DatasetSchema(
        dataset_id=dataset_id,
        assigned_etype=normalize_label(etype),
        columns=tuple(cols),
        meta=ResourceMeta(
            id=dataset_id, kind="dataset", category=category, popularity=popularity
        ),
    )


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Independent oracles


def oracle_coverage(alpha: set, beta: set) -> Fraction:
    return Fraction(len(alpha & beta), len(alpha))


def oracle_extensiveness(alpha: set, beta: set) -> Fraction:
    if not alpha and not beta:
        return Fraction(0)
    return Fraction(len(beta - alpha), len(alpha | beta))


def oracle_sparsity(alpha: set, beta: set) -> Fraction:
    if not alpha and not beta:
        return Fraction(0)
    return Fraction(len(alpha ^ beta), len(alpha | beta))


def bfs_component_count(eg) -> int:
    """Weakly connected components by plain breadth-first search."""
    neighbours = {entity_id: set() for entity_id in eg.entities}
    for entity in eg.entities.values():
        for _prop, target, _src in entity.object_links:
            if target in neighbours:
                neighbours[entity.id].add(target)
                neighbours[target].add(entity.id)
    seen = set()
    components = 0
    for start in neighbours:
        if start in seen:
            continue
        components += 1
        queue = deque([start])
        seen.add(start)
        while queue:
            node = queue.popleft()
            for nxt in neighbours[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
    return components


def occurrence_count(eg) -> int:
    """Total stored (value, source) occurrences across all entities."""
    return sum(
        len(pairs)
        for entity in eg.entities.values()
        for pairs in entity.data_values.values()
    )
