"""Phase 2, modeling: fold the competency queries and the shortlisted dataset
schemas into one entity type graph, then gate on extensiveness (eval_b).

The model records where each element came from and which reusability category
each etype inherits from its datasets; both drive the alignment policy later.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .inception import CandidateRanking, PropertyOverride
from .metrics import GateReport, Thresholds, evaluate_gate
from .model import (
    CATEGORIES,
    CompetencyQuery,
    DatasetSchema,
    ETG,
    Label,
    ModelError,
    PropertyDef,
    ResourceMeta,
    compound_key,
    etype_elements,
    property_elements,
    validate_etg,
)

FROM_CQ = "from_cq"
FROM_DATASET = "from_dataset"

EXT_HINT = "the model adds nothing beyond the queries; consider richer datasets"


class ModelingError(ModelError):
    """The inputs cannot be folded into a valid entity type graph."""


class MissingRangeError(ModelingError):
    """A link column has no object-property override declaring its range."""


class ConflictingPropertyKindError(ModelingError):
    """The same property is required to be both data- and object-valued."""


@dataclass(frozen=True)
class ETGModel:
    """The modeled graph plus provenance and per-etype category annotations."""

    etg: ETG
    provenance: Mapping[str, str]
    etype_categories: Mapping[str, str]

    def category_of(self, etype: Label) -> str:
        return self.etype_categories.get(etype.normalized, "contextual")


def _most_reusable(categories: Sequence[str]) -> str:
    if not categories:
        return "contextual"
    return min(categories, key=CATEGORIES.index)


def build_etg_model(
    cqs: Sequence[CompetencyQuery],
    schemas: Sequence[DatasetSchema],
    overrides: Mapping[str, PropertyOverride] | None = None,
    base_id: str = "purpose",
) -> ETGModel:
    """Union the query elements with the dataset schemas into one model.

    Every property defaults to a string-valued data property unless a purpose
    override retypes it. Link columns must carry an object override naming
    the range etype, and the range must itself be part of the model.
    """
    overrides = overrides or {}
    etypes: set[Label] = set()
    provenance: dict[str, str] = {}
    categories: dict[str, list[str]] = {}
    # (etype, property) -> does some source require an object property
    wants_object: dict[tuple[Label, Label], bool] = {}

    for schema in schemas:
        etypes.add(schema.assigned_etype)
        provenance.setdefault(schema.assigned_etype.normalized, FROM_DATASET)
        categories.setdefault(schema.assigned_etype.normalized, []).append(schema.meta.category)
        for column in schema.mapped_columns():
            pair = (schema.assigned_etype, column.mapped)
            wants_object[pair] = wants_object.get(pair, False) or column.role == "link"
            provenance.setdefault(compound_key(*pair), FROM_DATASET)

    for cq in cqs:
        for etype in cq.etypes:
            etypes.add(etype)
            provenance[etype.normalized] = FROM_CQ
        for etype, prop in cq.property_pairs:
            wants_object.setdefault((etype, prop), False)
            provenance[compound_key(etype, prop)] = FROM_CQ

    properties: dict[Label, list[PropertyDef]] = {}
    for (etype, prop), linkish in sorted(wants_object.items(), key=lambda kv: (kv[0][0].normalized, kv[0][1].normalized)):
        key = compound_key(etype, prop)
        override = overrides.get(key)
        if override is not None:
            if override.kind == "data" and linkish:
                raise ConflictingPropertyKindError(
                    f"{key}: declared data-valued but a dataset links through it"
                )
            definition = PropertyDef(
                name=prop, kind=override.kind, datatype=override.datatype, range=override.range
            )
        elif linkish:
            raise MissingRangeError(
                f"{key}: link column needs an object property override with a range"
            )
        else:
            definition = PropertyDef(name=prop)
        if definition.kind == "object" and definition.range not in etypes:
            raise ModelingError(f"{key}: range etype {definition.range} is not in the model")
        properties.setdefault(etype, []).append(definition)

    etg = ETG(
        id=f"{base_id}-model",
        etypes=frozenset(etypes),
        properties={e: tuple(defs) for e, defs in properties.items()},
        subclass_edges=frozenset(),
        meta=ResourceMeta(id=f"{base_id}-model", kind="ontology", category="contextual"),
    )
    violations = validate_etg(etg)
    if violations:
        listed = "; ".join(str(v) for v in violations)
        raise ModelingError(f"modeled graph is invalid: {listed}")

    etype_categories = {
        e.normalized: _most_reusable(categories.get(e.normalized, [])) for e in etypes
    }
    return ETGModel(etg=etg, provenance=provenance, etype_categories=etype_categories)


def select_datasets(ranking: CandidateRanking, max_per_category: int | None = None) -> list[str]:
    """Order the shortlisted datasets for integration: most reusable category
    first, ranking order inside each category."""
    selected: list[str] = []
    for category in CATEGORIES:
        in_category = [
            e.resource_id for e in ranking.by_category.get(category, ()) if e.kind == "dataset"
        ]
        if max_per_category is not None:
            in_category = in_category[:max_per_category]
        selected.extend(in_category)
    return selected


def eval_modeling(
    cqs: Sequence[CompetencyQuery],
    model: ETGModel,
    thresholds: Thresholds | None = None,
) -> GateReport:
    """Gate eval_b: how much the model extends the queries.

    Low extensiveness is advisory only; the gate warns below the floor but
    never fails the run.
    """
    thresholds = thresholds or Thresholds()
    pairs = [
        ("etg_model", etype_elements(cqs), etype_elements(model.etg)),
        ("etg_model", property_elements(cqs), property_elements(model.etg)),
    ]
    return evaluate_gate("eval_b", pairs, thresholds, default_note=EXT_HINT)


def provenance_to_json(model: ETGModel) -> dict:
    return {
        "provenance": {k: model.provenance[k] for k in sorted(model.provenance)},
        "etype_categories": {
            k: model.etype_categories[k] for k in sorted(model.etype_categories)
        },
    }


def model_from_docs(etg: ETG, prov_doc: Mapping) -> ETGModel:
    return ETGModel(
        etg=etg,
        provenance={str(k): str(v) for k, v in prov_doc.get("provenance", {}).items()},
        etype_categories={
            str(k): str(v) for k, v in prov_doc.get("etype_categories", {}).items()
        },
    )
