"""Phase 3, knowledge alignment: rank the reference ontologies, predict which
of their etypes match the model (entity type recognition), adopt reference
structure by category policy, and gate on sparsity (eval_c).

Common etypes always take the reference shape, core ones only on a strong
match, and contextual ones are never renamed; that keeps the purpose-specific
tail of the graph intact while the reusable head converges on shared terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .metrics import (
    GateReport,
    MetricResult,
    Thresholds,
    coverage,
    evaluate_gate,
    fraction_json,
)
from .model import (
    ETG,
    Label,
    ModelError,
    PropertyDef,
    ResourceMeta,
    compound_key,
    etype_elements,
    normalize_label,
    property_elements,
    validate_etg,
)
from .modeling import ETGModel

SPARSITY_HINT = "sparsity outside the agreed band; revisit the alignment with this ontology"


class AlignmentError(ModelError):
    """Alignment could not produce a valid final graph."""


class InvalidPolicyError(AlignmentError):
    """A policy knob is outside [0, 1] or the thresholds are inconsistent."""


class NoOntologiesError(AlignmentError):
    """The purpose lists no loadable reference ontology."""


def levenshtein(a: str, b: str) -> int:
    """Edit distance with two-row dynamic programming."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[len(b)]


def name_similarity(a: str, b: str) -> Fraction:
    """1 minus the edit distance normalized by the longer name."""
    longest = max(len(a), len(b))
    if longest == 0:
        return Fraction(1)
    return 1 - Fraction(levenshtein(a, b), longest)


def property_sharability(a_names: Iterable[str], b_names: Iterable[str]) -> Fraction:
    """Overlap of two property-name sets, symmetric in its arguments.

    Empty against empty counts as no sharing, not full sharing.
    """
    first, second = set(a_names), set(b_names)
    union = first | second
    if not union:
        return Fraction(0)
    return Fraction(len(first & second), len(union))


@dataclass(frozen=True)
class AlignmentPolicy:
    """Knobs for matching and adoption, all on a 0..1 scale."""

    match_threshold: Fraction = Fraction(7, 10)
    core_adopt_threshold: Fraction = Fraction(3, 4)
    etr_name_weight: Fraction = Fraction(1, 2)

    def __post_init__(self):
        for name in ("match_threshold", "core_adopt_threshold", "etr_name_weight"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise InvalidPolicyError(f"{name} must lie in [0, 1], got {value}")


def etr_score(
    name_a: str,
    props_a: Iterable[str],
    name_b: str,
    props_b: Iterable[str],
    policy: AlignmentPolicy | None = None,
) -> Fraction:
    """Match score of two etypes: weighted blend of name similarity and
    property sharability. Symmetric, since both terms are."""
    policy = policy or AlignmentPolicy()
    similarity = name_similarity(name_a, name_b)
    sharability = property_sharability(props_a, props_b)
    return policy.etr_name_weight * similarity + (1 - policy.etr_name_weight) * sharability


@dataclass(frozen=True)
class Candidate:
    """One ontology etype proposed for a model etype, with its score parts."""

    label: Label
    score: Fraction
    name_similarity: Fraction
    sharability: Fraction


@dataclass(frozen=True)
class PredictionVector:
    """Per model etype, the candidates from one ontology that cleared the
    match threshold, best first."""

    ontology_id: str
    candidates: Mapping[str, tuple[Candidate, ...]]

    def best_for(self, etype: Label) -> Candidate | None:
        ranked = self.candidates.get(etype.normalized, ())
        return ranked[0] if ranked else None


def etr_predict(model: ETGModel, ontology: ETG, policy: AlignmentPolicy) -> PredictionVector:
    """Score every (model etype, ontology etype) pair and keep the candidates
    at or above the match threshold.

    The score blends name similarity with property sharability; sharability
    compares each etype's own property names, not inherited ones.
    """
    by_etype: dict[str, tuple[Candidate, ...]] = {}
    for etype in model.etg.sorted_etypes():
        model_props = model.etg.property_names(etype)
        candidates = []
        for onto_etype in ontology.sorted_etypes():
            similarity = name_similarity(etype.normalized, onto_etype.normalized)
            sharability = property_sharability(model_props, ontology.property_names(onto_etype))
            score = (
                policy.etr_name_weight * similarity
                + (1 - policy.etr_name_weight) * sharability
            )
            if score >= policy.match_threshold:
                candidates.append(
                    Candidate(
                        label=onto_etype,
                        score=score,
                        name_similarity=similarity,
                        sharability=sharability,
                    )
                )
        candidates.sort(key=lambda c: (-c.score, -c.sharability, c.label.normalized))
        if candidates:
            by_etype[etype.normalized] = tuple(candidates)
    return PredictionVector(ontology_id=ontology.meta.id, candidates=by_etype)


@dataclass(frozen=True)
class RankedOntology:
    ontology_id: str
    popularity: int
    etype_coverage: MetricResult
    mean_sharability: Fraction

    def sort_key(self):
        return (
            -self.popularity,
            -self.etype_coverage.value,
            -self.mean_sharability,
            self.ontology_id,
        )


@dataclass(frozen=True)
class OntologyRanking:
    included: tuple[RankedOntology, ...]
    excluded: tuple[tuple[str, str], ...]

    def ordered_ids(self) -> list[str]:
        return [entry.ontology_id for entry in self.included]


def rank_ontologies(model: ETGModel, ontologies: Mapping[str, ETG]) -> OntologyRanking:
    """Order the reference ontologies by popularity, then how much of the
    model they cover, then how well properties of same-named etypes line up.

    Ontologies sharing no etype with the model are excluded from alignment.
    """
    if not ontologies:
        raise NoOntologiesError("no reference ontology was loaded for alignment")
    model_elements = etype_elements(model.etg)
    included = []
    excluded = []
    for ontology_id in sorted(ontologies):
        ontology = ontologies[ontology_id]
        cov = coverage(model_elements, etype_elements(ontology))
        if cov.value == 0:
            excluded.append((ontology_id, "shares no etype with the model"))
            continue
        shared = model.etg.etypes & ontology.etypes
        shares = [
            property_sharability(
                model.etg.property_names(e), ontology.property_names(e)
            )
            for e in sorted(shared, key=lambda x: x.normalized)
        ]
        mean = sum(shares, Fraction(0)) / len(shares) if shares else Fraction(0)
        included.append(
            RankedOntology(
                ontology_id=ontology_id,
                popularity=ontology.meta.popularity,
                etype_coverage=cov,
                mean_sharability=mean,
            )
        )
    included.sort(key=RankedOntology.sort_key)
    return OntologyRanking(included=tuple(included), excluded=tuple(excluded))


@dataclass(frozen=True)
class Decision:
    """What happened to one model etype during alignment."""

    etype: str
    category: str
    action: str
    ontology: str | None = None
    candidate: str | None = None
    score: Fraction | None = None
    adopted_properties: tuple[str, ...] = ()
    adopted_parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class MergePlan:
    decisions: tuple[Decision, ...]
    adoption_rates: Mapping[str, Fraction | None]
    rename_map: Mapping[str, str]


def _closure_edges(ontology: ETG, members: set[Label]) -> set[tuple[Label, Label]]:
    return {
        (child, parent)
        for child, parent in ontology.subclass_edges
        if child in members and parent in members
    }


def generate_etg(
    model: ETGModel,
    predictions: Mapping[str, PredictionVector],
    ranking: OntologyRanking,
    ontologies: Mapping[str, ETG],
    policy: AlignmentPolicy | None = None,
) -> tuple[ETG, MergePlan]:
    """Merge the model with its best reference matches into the final graph.

    Each model etype takes its top candidate from the highest-ranked ontology
    that offers one. Adopting an etype renames it to the reference label and
    pulls in the reference properties plus the full ancestor chain; on a
    property name clash the model's definition stands.
    """
    policy = policy or AlignmentPolicy()
    decisions: list[Decision] = []
    rename_map: dict[str, str] = {}
    final_etypes: set[Label] = set()
    # insertion order fixes precedence: model definitions land first
    final_props: dict[Label, dict[str, PropertyDef]] = {}
    final_edges: set[tuple[Label, Label]] = set()
    adopted_count: dict[str, int] = {}
    category_count: dict[str, int] = {}

    def add_props(etype: Label, defs: Iterable[PropertyDef]) -> list[str]:
        bucket = final_props.setdefault(etype, {})
        added = []
        for definition in defs:
            if definition.name.normalized not in bucket:
                bucket[definition.name.normalized] = definition
                added.append(definition.name.normalized)
        return added

    for etype in model.etg.sorted_etypes():
        category = model.category_of(etype)
        category_count[category] = category_count.get(category, 0) + 1
        best: tuple[str, Candidate] | None = None
        for ontology_id in ranking.ordered_ids():
            vector = predictions.get(ontology_id)
            candidate = vector.best_for(etype) if vector else None
            if candidate is not None:
                best = (ontology_id, candidate)
                break

        adopt = False
        if best is not None:
            if category == "common":
                adopt = True
            elif category == "core":
                adopt = best[1].score >= policy.core_adopt_threshold

        if not adopt:
            final_etypes.add(etype)
            add_props(etype, model.etg.props_of(etype))
            decisions.append(
                Decision(
                    etype=etype.normalized,
                    category=category,
                    action="keep",
                    ontology=best[0] if best else None,
                    candidate=best[1].label.normalized if best else None,
                    score=best[1].score if best else None,
                )
            )
            continue

        ontology_id, candidate = best
        ontology = ontologies[ontology_id]
        final_name = candidate.label
        if final_name != etype:
            rename_map[etype.normalized] = final_name.normalized
        final_etypes.add(final_name)
        add_props(final_name, model.etg.props_of(etype))
        adopted = add_props(final_name, ontology.props_of(final_name))
        ancestors = ontology.ancestors_of(final_name)
        for ancestor in ancestors:
            final_etypes.add(ancestor)
            add_props(ancestor, ontology.props_of(ancestor))
        final_edges |= _closure_edges(ontology, {final_name, *ancestors})
        adopted_count[category] = adopted_count.get(category, 0) + 1
        decisions.append(
            Decision(
                etype=etype.normalized,
                category=category,
                action="adopt",
                ontology=ontology_id,
                candidate=final_name.normalized,
                score=candidate.score,
                adopted_properties=tuple(sorted(adopted)),
                adopted_parents=tuple(a.normalized for a in ancestors),
            )
        )

    def renamed(label: Label) -> Label:
        target = rename_map.get(label.normalized)
        return normalize_label(target) if target else label

    properties = {
        etype: tuple(
            PropertyDef(
                name=d.name,
                kind=d.kind,
                datatype=d.datatype,
                range=renamed(d.range) if d.range is not None else None,
            )
            for d in bucket.values()
        )
        for etype, bucket in final_props.items()
    }

    base = model.etg.id
    if base.endswith("-model"):
        base = base[: -len("-model")]
    final = ETG(
        id=f"{base}-etg",
        etypes=frozenset(final_etypes),
        properties=properties,
        subclass_edges=frozenset(final_edges),
        meta=ResourceMeta(id=f"{base}-etg", kind="ontology", category="contextual"),
    )
    violations = validate_etg(final)
    if violations:
        listed = "; ".join(str(v) for v in violations)
        raise AlignmentError(f"aligned graph is invalid: {listed}")
    _check_queries_preserved(model, final, rename_map)

    rates = {
        category: Fraction(adopted_count.get(category, 0), total) if total else None
        for category, total in sorted(category_count.items())
    }
    plan = MergePlan(decisions=tuple(decisions), adoption_rates=rates, rename_map=rename_map)
    return final, plan


def _check_queries_preserved(model: ETGModel, final: ETG, rename_map: Mapping[str, str]) -> None:
    """Every query element in the model must survive alignment, possibly under
    its reference name."""
    final_names = {e.normalized for e in final.etypes}
    final_pairs = {
        compound_key(e, d.name) for e in final.etypes for d in final.props_of(e)
    }
    for element, source in model.provenance.items():
        if source != "from_cq":
            continue
        if "." in element:
            etype_name, _, prop_name = element.partition(".")
            etype_name = rename_map.get(etype_name, etype_name)
            if f"{etype_name}.{prop_name}" not in final_pairs:
                raise AlignmentError(f"alignment lost the query property {element}")
        else:
            if rename_map.get(element, element) not in final_names:
                raise AlignmentError(f"alignment lost the query etype {element}")


def eval_alignment(
    final: ETG,
    ranking: OntologyRanking,
    ontologies: Mapping[str, ETG],
    thresholds: Thresholds | None = None,
) -> GateReport:
    """Gate eval_c: the final graph must sit close enough to each retained
    reference ontology, measured as sparsity over etypes and properties."""
    thresholds = thresholds or Thresholds()
    pairs = []
    for ontology_id in ranking.ordered_ids():
        ontology = ontologies[ontology_id]
        pairs.append((ontology_id, etype_elements(final), etype_elements(ontology)))
        pairs.append((ontology_id, property_elements(final), property_elements(ontology)))
    notes = []
    if not pairs:
        notes.append("no reference ontology overlaps the model; nothing to align against")
    return evaluate_gate(
        "eval_c", pairs, thresholds, notes=tuple(notes), default_note=SPARSITY_HINT
    )


def ranking_to_json(ranking: OntologyRanking) -> dict:
    return {
        "included": [
            {
                "id": entry.ontology_id,
                "popularity": entry.popularity,
                "etype_coverage": entry.etype_coverage.to_json(),
                "mean_sharability": fraction_json(entry.mean_sharability),
            }
            for entry in ranking.included
        ],
        "excluded": [{"id": oid, "reason": reason} for oid, reason in ranking.excluded],
    }


def plan_to_json(plan: MergePlan) -> dict:
    return {
        "decisions": [
            {
                "etype": d.etype,
                "category": d.category,
                "action": d.action,
                "ontology": d.ontology,
                "candidate": d.candidate,
                "score": fraction_json(d.score) if d.score is not None else None,
                "adopted_properties": list(d.adopted_properties),
                "adopted_parents": list(d.adopted_parents),
            }
            for d in plan.decisions
        ],
        "adoption_rates": {
            category: fraction_json(rate) if rate is not None else None
            for category, rate in plan.adoption_rates.items()
        },
        "rename_map": {k: plan.rename_map[k] for k in sorted(plan.rename_map)},
    }
