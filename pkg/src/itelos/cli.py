"""Command line front end.

One subcommand per phase plus `run` for the whole pipeline. Every phase reads
its inputs from files and writes its artifacts back to the output directory,
so `run` and the individual subcommands compose to byte-identical results
(the run manifest, which carries timestamps, is the one exception).

Exit codes: 0 all gates passed (warnings allowed), 1 a gate failed or a phase
errored, 2 the invocation or configuration was unusable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .alignment import (
    AlignmentPolicy,
    InvalidPolicyError,
    etr_predict,
    eval_alignment,
    generate_etg,
    plan_to_json,
    rank_ontologies,
)
from .alignment import ranking_to_json as ontology_ranking_to_json
from .inception import (
    ResourceRef,
    collect_resources,
    eval_inception,
    match_resources,
    parse_purpose,
    ranking_from_json,
    ranking_to_json,
)
from .integration import (
    connected_components,
    eval_purpose,
    export_eg,
    infer_mapping,
    initial_state,
    integrate_dataset,
    override_from_doc,
    read_dataset_rows,
)
from .metrics import GateReport, MetricError, Thresholds, as_fraction
from .model import ModelError, dump_etg, load_etg, validate_eg
from .modeling import (
    build_etg_model,
    eval_modeling,
    model_from_docs,
    provenance_to_json,
    select_datasets,
)

PHASES = ("inception", "model", "align", "integrate")


class ConfigError(ValueError):
    """The invocation cannot be turned into a usable configuration."""


class PhaseError(RuntimeError):
    """A phase could not run to completion."""


@dataclass(frozen=True)
class PipelineConfig:
    purpose: Path
    out: Path
    thresholds: Thresholds
    policy: AlignmentPolicy
    max_per_category: int | None = None
    fail_fast: bool = True
    mappings: tuple[Path, ...] = ()
    etg: Path | None = None
    datasets_dir: Path | None = None

    @property
    def base_dir(self) -> Path:
        return self.purpose.parent


_CONFIG_KEYS = {
    "out",
    "cov_min",
    "ext_floor",
    "spr_band_min",
    "spr_band_max",
    "match_threshold",
    "core_adopt_threshold",
    "etr_name_weight",
    "max_per_category",
    "fail_fast",
    "mappings",
    "etg",
    "datasets",
}


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge flags, the optional config file, and the environment.

    Flags win over the config file; ITELOS_OUT is consulted for the output
    directory only, after both.
    """
    file_cfg = {}
    if args.config is not None:
        config_path = Path(args.config)
        try:
            file_cfg = json.loads(config_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{config_path}: invalid JSON at line {exc.lineno}, column {exc.colno}"
            ) from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{config_path}: config root must be an object")
        unknown = sorted(set(file_cfg) - _CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"{config_path}: unknown config keys: {', '.join(unknown)}")

    def pick(flag_value, key):
        return flag_value if flag_value is not None else file_cfg.get(key)

    purpose = Path(args.purpose)
    if not purpose.is_file():
        raise ConfigError(f"purpose file {purpose} does not exist")
    out = pick(args.out, "out") or os.environ.get("ITELOS_OUT") or "out"

    def fraction_or(flag_value, key, fallback):
        value = pick(flag_value, key)
        if value is None:
            return fallback
        try:
            return as_fraction(value)
        except (MetricError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc

    defaults = Thresholds()
    try:
        thresholds = Thresholds(
            cov_min=fraction_or(args.cov_min, "cov_min", defaults.cov_min),
            ext_floor=fraction_or(args.ext_floor, "ext_floor", defaults.ext_floor),
            spr_band_min=fraction_or(args.spr_band_min, "spr_band_min", defaults.spr_band_min),
            spr_band_max=fraction_or(args.spr_band_max, "spr_band_max", defaults.spr_band_max),
        )
    except MetricError as exc:
        raise ConfigError(str(exc)) from exc
    default_policy = AlignmentPolicy()
    try:
        policy = AlignmentPolicy(
            match_threshold=fraction_or(
                args.match_threshold, "match_threshold", default_policy.match_threshold
            ),
            core_adopt_threshold=fraction_or(
                args.core_adopt_threshold,
                "core_adopt_threshold",
                default_policy.core_adopt_threshold,
            ),
            etr_name_weight=fraction_or(
                args.etr_name_weight, "etr_name_weight", default_policy.etr_name_weight
            ),
        )
    except InvalidPolicyError as exc:
        raise ConfigError(str(exc)) from exc

    max_per_category = pick(args.max_per_category, "max_per_category")
    if max_per_category is not None:
        max_per_category = int(max_per_category)
        if max_per_category < 1:
            raise ConfigError("max_per_category must be a positive integer")
    fail_fast = pick(args.fail_fast, "fail_fast")
    if fail_fast is None:
        fail_fast = True
    mappings = [Path(m) for m in args.mapping or []]
    # --mappings (or a string-valued "mappings" config key) names a directory
    # of override files; a list-valued config key names them one by one.
    mappings_dir = args.mappings
    if mappings_dir is None and isinstance(file_cfg.get("mappings"), str):
        mappings_dir = file_cfg["mappings"]
    if mappings_dir is not None:
        directory = Path(mappings_dir)
        if not directory.is_dir():
            raise ConfigError(f"mapping directory {directory} does not exist")
        mappings.extend(sorted(directory.glob("*.json")))
    elif not mappings and isinstance(file_cfg.get("mappings"), list):
        mappings = [Path(m) for m in file_cfg["mappings"]]
    etg = pick(args.etg, "etg")
    datasets_dir = pick(args.datasets, "datasets")
    return PipelineConfig(
        purpose=purpose,
        out=Path(out),
        thresholds=thresholds,
        policy=policy,
        max_per_category=max_per_category,
        fail_fast=bool(fail_fast),
        mappings=tuple(mappings),
        etg=Path(etg) if etg is not None else None,
        datasets_dir=Path(datasets_dir).absolute() if datasets_dir is not None else None,
    )


def _write_json(path: Path, doc) -> None:
    path.write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _write_gate(out: Path, report: GateReport) -> None:
    _write_json(out / f"{report.gate}.json", report.to_json())
    (out / f"{report.gate}.txt").write_text(report.to_text(), encoding="utf-8")


def _read_artifact(out: Path, name: str) -> dict:
    path = out / name
    if not path.is_file():
        raise PhaseError(
            f"missing artifact {path}; run the earlier phases into this output directory first"
        )
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PhaseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc


def _out_dirs(config: PipelineConfig) -> tuple[Path, Path]:
    """Artifact directory and triples path; --out may name eg.nt directly."""
    if config.out.suffix == ".nt":
        return config.out.parent, config.out
    return config.out, config.out / "eg.nt"


def _dataset_path(config: PipelineConfig, ref: ResourceRef) -> Path:
    if config.datasets_dir is not None and ref.meta.kind == "dataset":
        return config.datasets_dir / ref.path
    return config.base_dir / ref.path


def _load_catalog(config: PipelineConfig):
    purpose = parse_purpose(config.purpose)
    refs = purpose.dataset_refs
    if config.datasets_dir is not None:
        # absolute paths survive the base_dir join in collect_resources
        refs = tuple(
            ResourceRef(path=str(config.datasets_dir / ref.path), meta=ref.meta)
            for ref in refs
        )
    catalog = collect_resources(refs + purpose.ontology_refs, config.base_dir)
    return purpose, catalog


def phase_inception(config: PipelineConfig) -> GateReport:
    purpose, catalog = _load_catalog(config)
    ranking = match_resources(purpose.cqs, catalog)
    report = eval_inception(purpose.cqs, ranking, config.thresholds)
    out, _ = _out_dirs(config)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "inception.json",
        {
            "purpose": {
                "title": purpose.title,
                "slug": purpose.slug,
                "competency_queries": [cq.id for cq in purpose.cqs],
            },
            "ranking": ranking_to_json(ranking),
            "load_errors": [
                {"id": e.resource_id, "path": e.path, "message": e.message}
                for e in catalog.errors
            ],
        },
    )
    _write_gate(out, report)
    return report


def phase_model(config: PipelineConfig) -> GateReport:
    purpose, catalog = _load_catalog(config)
    out, _ = _out_dirs(config)
    out.mkdir(parents=True, exist_ok=True)
    ranking = ranking_from_json(_read_artifact(out, "inception.json")["ranking"], catalog)
    selection = select_datasets(ranking, config.max_per_category)
    schemas = [catalog.datasets()[dataset_id] for dataset_id in selection]
    model = build_etg_model(
        purpose.cqs, schemas, purpose.property_overrides, base_id=purpose.slug
    )
    dump_etg(model.etg, out / "etg_model.json")
    _write_json(out / "etg_model_provenance.json", provenance_to_json(model))
    _write_json(out / "selection.json", {"datasets": selection})
    report = eval_modeling(purpose.cqs, model, config.thresholds)
    _write_gate(out, report)
    return report


def phase_align(config: PipelineConfig) -> GateReport:
    purpose, catalog = _load_catalog(config)
    out, _ = _out_dirs(config)
    out.mkdir(parents=True, exist_ok=True)
    etg = load_etg(out / "etg_model.json")
    model = model_from_docs(etg, _read_artifact(out, "etg_model_provenance.json"))
    ontologies = catalog.ontologies()
    ranking = rank_ontologies(model, ontologies)
    predictions = {
        entry.ontology_id: etr_predict(model, ontologies[entry.ontology_id], config.policy)
        for entry in ranking.included
    }
    final, plan = generate_etg(model, predictions, ranking, ontologies, config.policy)
    dump_etg(final, out / "etg_final.json")
    _write_json(
        out / "merge_plan.json",
        {"ontology_ranking": ontology_ranking_to_json(ranking), **plan_to_json(plan)},
    )
    _write_json(out / "rename_map.json", dict(sorted(plan.rename_map.items())))
    report = eval_alignment(final, ranking, ontologies, config.thresholds)
    _write_gate(out, report)
    return report


def phase_integrate(config: PipelineConfig) -> GateReport:
    purpose, catalog = _load_catalog(config)
    out, triples_path = _out_dirs(config)
    out.mkdir(parents=True, exist_ok=True)
    etg_path = config.etg if config.etg is not None else out / "etg_final.json"
    if not etg_path.is_file():
        raise PhaseError(
            f"missing schema graph {etg_path}; run the align phase first or pass --etg"
        )
    etg = load_etg(etg_path)
    # standalone use (--etg without earlier phases): no renames, purpose order
    if (out / "rename_map.json").is_file():
        rename_map = {
            str(k): str(v) for k, v in _read_artifact(out, "rename_map.json").items()
        }
    else:
        rename_map = {}
    if (out / "selection.json").is_file():
        selection = [str(d) for d in _read_artifact(out, "selection.json")["datasets"]]
    else:
        selection = [ref.meta.id for ref in purpose.dataset_refs]
    overrides = {}
    for mapping_path in config.mappings:
        try:
            doc = json.loads(mapping_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise PhaseError(f"cannot read mapping override {mapping_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise PhaseError(
                f"{mapping_path}: invalid JSON at line {exc.lineno}, column {exc.colno}"
            ) from exc
        override = override_from_doc(doc)
        overrides[override.dataset_id] = override

    graph_id = etg.id
    if graph_id.endswith("-etg"):
        graph_id = graph_id[: -len("-etg")]
    state = initial_state(etg, f"{graph_id}-eg")
    datasets = catalog.datasets()
    cases = []
    for dataset_id in selection:
        if dataset_id not in datasets:
            raise PhaseError(f"selected dataset {dataset_id!r} is not loadable")
        ref = purpose.ref_for(dataset_id)
        if ref is None:
            raise PhaseError(f"selected dataset {dataset_id!r} is not in the purpose")
        header, rows = read_dataset_rows(_dataset_path(config, ref))
        mapping = infer_mapping(
            datasets[dataset_id],
            etg,
            rename_map=rename_map,
            override=overrides.get(dataset_id),
        )
        state, case = integrate_dataset(state, mapping, header, rows)
        cases.append(case)

    violations = validate_eg(state.eg)
    if violations:
        listed = "; ".join(str(v) for v in violations)
        raise PhaseError(f"integrated graph is invalid: {listed}")
    warnings = export_eg(state.eg, triples_path)
    report = eval_purpose(state.eg, purpose.cqs, rename_map, config.thresholds)
    _write_json(
        out / "integration_report.json",
        {
            "cases": [case.to_json() for case in cases],
            "export_warnings": warnings,
            "summary": {
                "entities": len(state.eg.entities),
                "conflicts": len(state.eg.conflict_flags),
                "connected_components": connected_components(state.eg),
                "unresolved_links": len(state.pending),
            },
        },
    )
    _write_gate(out, report)
    return report


_PHASE_FUNCTIONS = {
    "inception": phase_inception,
    "model": phase_model,
    "align": phase_align,
    "integrate": phase_integrate,
}


def _sha256(path: Path) -> str | None:
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError:
        return None


def _input_digests(config: PipelineConfig) -> dict[str, str | None]:
    digests = {str(config.purpose): _sha256(config.purpose)}
    purpose = parse_purpose(config.purpose)
    for ref in purpose.dataset_refs + purpose.ontology_refs:
        path = _dataset_path(config, ref)
        digests[str(path)] = _sha256(path)
        if ref.meta.kind == "dataset":
            sidecar = path.with_name(path.stem + ".schema.json")
            digests[str(sidecar)] = _sha256(sidecar)
    for mapping_path in config.mappings:
        digests[str(mapping_path)] = _sha256(mapping_path)
    return digests


def phase_run(config: PipelineConfig) -> int:
    """All four phases in order, stopping at the first failed gate unless
    --no-fail-fast was given. Writes a manifest with input digests."""
    verdicts: dict[str, str | None] = {name: None for name in PHASES}
    failed = False
    for name in PHASES:
        report = _PHASE_FUNCTIONS[name](config)
        print(report.to_text())
        verdicts[name] = report.verdict
        if report.verdict == "fail":
            failed = True
            if config.fail_fast:
                break
    out, _ = _out_dirs(config)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "run_manifest.json",
        {
            "tool": f"itelos {__version__}",
            "created_utc": datetime.now(timezone.utc).isoformat(),
            "inputs": _input_digests(config),
            "phases": verdicts,
        },
    )
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itelos",
        description="Purpose-driven data integration: build an aligned schema "
        "graph and an integrated entity graph, with a quality gate after "
        "every phase.",
    )
    parser.add_argument("--version", action="version", version=f"itelos {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--purpose", required=True, help="purpose JSON file")
    common.add_argument("--out", default=None, help="output directory (default: out)")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--cov-min", default=None, help="eval_a coverage threshold")
    common.add_argument("--ext-floor", default=None, help="eval_b extensiveness floor")
    common.add_argument("--spr-band-min", default=None, help="eval_c sparsity band lower edge")
    common.add_argument("--spr-band-max", default=None, help="eval_c sparsity band upper edge")
    common.add_argument("--match-threshold", default=None, help="minimum etype match score")
    common.add_argument(
        "--core-adopt-threshold", default=None, help="adoption score needed for core etypes"
    )
    common.add_argument("--etr-name-weight", default=None, help="name weight in the match score")
    common.add_argument(
        "--max-per-category", type=int, default=None, help="cap on datasets per category"
    )
    common.add_argument(
        "--fail-fast",
        action="store_true",
        default=None,
        help="stop at the first failed gate (default)",
    )
    common.add_argument(
        "--no-fail-fast", dest="fail_fast", action="store_false", help="run every phase regardless"
    )
    common.add_argument(
        "--mapping",
        action="append",
        default=None,
        help="mapping override JSON for one dataset (repeatable)",
    )
    common.add_argument(
        "--mappings", default=None, help="directory of mapping override JSON files"
    )
    common.add_argument(
        "--etg", default=None, help="final schema graph to integrate against"
    )
    common.add_argument(
        "--datasets", default=None, help="directory to resolve dataset paths against"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("inception", parents=[common], help="rank candidate resources (eval_a)")
    subparsers.add_parser("model", parents=[common], help="build the schema model (eval_b)")
    subparsers.add_parser("align", parents=[common], help="align with reference ontologies (eval_c)")
    subparsers.add_parser(
        "integrate", parents=[common], help="populate and export the entity graph (eval_d)"
    )
    subparsers.add_parser("run", parents=[common], help="all phases in order")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            return phase_run(config)
        report = _PHASE_FUNCTIONS[args.command](config)
    except (ModelError, MetricError, PhaseError, OSError) as exc:
        print(f"{args.command} error: {exc}", file=sys.stderr)
        return 1
    print(report.to_text())
    return 1 if report.verdict == "fail" else 0


if __name__ == "__main__":
    sys.exit(main())
