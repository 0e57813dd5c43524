"""End-to-end batch pipeline and its persisted artifacts.

A run reads the assignee table and the augmentation cache, then parses,
embeds, matches, and filters, writing one artifact per stage into the output
directory: cleaned.tsv, pairs.tsv, mapping.tsv, summary.json, eval.json (when
gold labels are given), and manifest.json. Given equal inputs, config, and
seed, reruns are byte-identical on the data artifacts.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from . import __version__
from .augment import (
    AugmentationCache,
    AugmentationResult,
    DomainInfo,
    HtmlSearchProvider,
    SearchProvider,
    build_domain_info,
    build_frequent_domain_blocklist,
    fetch_augmentation,
)
from .config import PipelineConfig
from .embed import FileVectorBackend, HashingBackend, compute_idf, embed_corpus
from .errors import ConfigError, InputError, ProviderError, StageError
from .evaluation import build_report, reduction_rate
from .graph import Partition, assign_canonical_names, build_graph, refine_communities
from .ingest import AssigneeRecord, load_assignee_table, load_gold_standard
from .match import (
    ScoredPair,
    WeightVector,
    brute_force_candidates,
    generate_candidate_pairs,
    matching_score,
    score_pairs,
    write_scored_pairs,
)
from .parse import (
    CleanName,
    LegalDesignatorDictionary,
    build_common_word_list,
    classify_name_type,
    clean_name,
)
from .tune import TrialHistory, optimize

log = logging.getLogger(__name__)

MAPPING_HEADER = ["record_id", "raw_name", "community_id", "canonical_name"]
CLEANED_HEADER = ["record_id", "cleaned_name", "name_class", "degenerate"]


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    package_version: str = __version__
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    stage_counts: dict[str, int] = field(default_factory=dict)
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_hash": self.config_hash,
                "seed": self.seed,
                "package_version": self.package_version,
                "inputs": self.inputs,
                "outputs": self.outputs,
                "stage_counts": self.stage_counts,
                "stage_seconds": self.stage_seconds,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_mapping(partition: Partition, records: Mapping[str, AssigneeRecord], path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("\t".join(MAPPING_HEADER) + "\n")
        for record_id in sorted(partition.assignments):
            cid = partition.assignments[record_id]
            canonical = partition.canonical.get(cid, "")
            fh.write(f"{record_id}\t{records[record_id].raw_name}\t{cid}\t{canonical}\n")


def read_mapping(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"mapping file not found: {path}")
    rows = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != MAPPING_HEADER:
            raise InputError(f"{path}: bad header {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise InputError(f"{path} line {line_no}: expected 4 fields")
            try:
                cid = int(cols[2])
            except ValueError:
                raise InputError(f"{path} line {line_no}: bad community_id {cols[2]!r}")
            rows.append(
                {"record_id": cols[0], "raw_name": cols[1], "community_id": cid, "canonical_name": cols[3]}
            )
    return rows


def _write_cleaned(names: Sequence[CleanName], path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("\t".join(CLEANED_HEADER) + "\n")
        for name in sorted(names, key=lambda n: n.record_id):
            cls = name.name_class.name.lower() if name.name_class else ""
            fh.write(f"{name.record_id}\t{name.cleaned}\t{cls}\t{int(name.degenerate)}\n")


@dataclass
class CorpusArtifacts:
    """Everything the matcher and filter need, reusable across tuning trials."""

    records: dict[str, AssigneeRecord]
    names: list[CleanName]
    names_by_id: dict[str, CleanName]
    domain_info: dict[str, DomainInfo]
    embeddings: dict
    candidates: list[tuple[str, str]]
    results_by_id: dict[str, Optional[AugmentationResult]]
    n_augmented: int
    n_corrected: int


def _augment_stage(
    records: Sequence[AssigneeRecord],
    cache: AugmentationCache,
    provider: Optional[SearchProvider],
    threads: int,
) -> dict[str, Optional[AugmentationResult]]:
    """Resolve augmentation for every record, fetching misses when a provider
    is available. Fetches may run in parallel; results keep record order."""

    def fetch_one(record: AssigneeRecord) -> Optional[AugmentationResult]:
        try:
            return fetch_augmentation(record.raw_name, provider, cache)
        except ProviderError as exc:
            log.warning("augmentation failed for %r: %s", record.raw_name, exc)
            return None

    results: dict[str, Optional[AugmentationResult]] = {}
    if provider is not None and threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            fetched = pool.map(fetch_one, records)
        for record, result in zip(records, fetched):
            results[record.record_id] = result
    else:
        for record in records:
            results[record.record_id] = fetch_one(record)
    return results


def prepare_corpus(
    config: PipelineConfig,
    records: Sequence[AssigneeRecord],
    cache: AugmentationCache,
    provider: Optional[SearchProvider] = None,
    counts: Optional[dict] = None,
) -> CorpusArtifacts:
    """Augment (from cache), parse, classify, embed, and block the corpus."""
    threads = config["run"]["threads"]
    results_by_id = _augment_stage(records, cache, provider, threads)
    n_augmented = sum(1 for r in results_by_id.values() if r is not None)
    n_corrected = sum(1 for r in results_by_id.values() if r is not None and r.corrected_name)

    designator_path = config["parse"]["designators"]
    designators = LegalDesignatorDictionary.from_file(designator_path)
    names: list[CleanName] = []
    for record in records:
        result = results_by_id[record.record_id]
        correction = result.corrected_name if result is not None else None
        names.append(
            clean_name(
                record.raw_name,
                correction,
                designators,
                record_id=record.record_id,
                interior=config["parse"]["interior_strip"],
            )
        )
    common = build_common_word_list(names, config["parse"]["common_words_n"])
    names = [n.with_class(classify_name_type(n.tokens, common)) for n in names]

    corpus_results = [r for r in results_by_id.values() if r is not None]
    blocklist = build_frequent_domain_blocklist(corpus_results, config["augment"]["blocklist_k"])
    domain_info = {
        record.record_id: build_domain_info(
            record.record_id, results_by_id[record.record_id], blocklist, common
        )
        for record in records
    }

    embed_cfg = config["embed"]
    if embed_cfg["backend"] == "hashing":
        backend = HashingBackend(dim=embed_cfg["dim"], seed=embed_cfg["seed"])
    elif embed_cfg["backend"] == "file":
        if not embed_cfg["vectors_path"]:
            raise ConfigError("embed.backend=file needs embed.vectors_path")
        backend = FileVectorBackend(
            embed_cfg["vectors_path"],
            strict=embed_cfg["strict_vectors"],
            hash_seed=embed_cfg["seed"],
        )
    else:
        raise ConfigError(f"unknown embed backend {embed_cfg['backend']!r}")
    source = config["match"]["cos_on"]
    if source not in ("cleaned", "raw"):
        raise ConfigError(f"match.cos_on must be cleaned|raw, got {source!r}")
    idf = compute_idf(names, floor=embed_cfg["idf_floor"], source=source)
    embeddings = embed_corpus(names, backend, idf, source=source)

    if config["match"]["brute_force"]:
        candidates = brute_force_candidates(names)
    else:
        candidates = generate_candidate_pairs(names, domain_info)

    if counts is not None:
        counts.update(
            {
                "records": len(records),
                "augmented": n_augmented,
                "corrected": n_corrected,
                "type1": sum(1 for n in names if n.name_class and n.name_class.name == "TYPE1"),
                "type2": sum(1 for n in names if n.name_class and n.name_class.name == "TYPE2"),
                "degenerate": sum(1 for n in names if n.degenerate),
                "candidate_pairs": len(candidates),
            }
        )
    return CorpusArtifacts(
        records={r.record_id: r for r in records},
        names=names,
        names_by_id={n.record_id: n for n in names},
        domain_info=domain_info,
        embeddings=embeddings,
        candidates=candidates,
        results_by_id=results_by_id,
        n_augmented=n_augmented,
        n_corrected=n_corrected,
    )


def make_provider(config: PipelineConfig, offline: bool) -> Optional[SearchProvider]:
    """Build the live provider, or None when offline or unconfigured."""
    if offline or config["run"]["offline"]:
        return None
    endpoint = config["augment"]["provider"]["endpoint"]
    if not endpoint:
        return None
    p = config["augment"]["provider"]
    return HtmlSearchProvider(
        endpoint=p["endpoint"],
        query_param=p["query_param"],
        suggestion_selector=p["suggestion_selector"],
        result_selector=p["result_selector"],
        rate_limit_per_s=p["rate_limit_per_s"],
        timeout_s=p["timeout_s"],
        retries=p["retries"],
    )


def run_pipeline(
    config: PipelineConfig,
    input_path: str | Path,
    cache_path: str | Path,
    out_dir: str | Path,
    gold_path: str | Path | None = None,
    offline: bool = True,
) -> RunManifest:
    """Execute all stages and persist per-stage artifacts plus the manifest.

    Fails atomically per stage: on error, files created by this run are
    removed and a StageError names the stage.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=config.config_hash(), seed=config["run"]["seed"])
    created: list[Path] = []
    stage = "ingest"
    t_stage = time.perf_counter()

    def finish_stage(name: str, **counts: int) -> None:
        nonlocal t_stage
        manifest.stage_seconds[name] = round(time.perf_counter() - t_stage, 6)
        manifest.stage_counts.update(counts)
        t_stage = time.perf_counter()

    try:
        input_path = Path(input_path)
        cache_path = Path(cache_path)
        records = load_assignee_table(input_path)
        if not records:
            raise InputError(f"{input_path}: no records")
        manifest.inputs[str(input_path)] = _sha256(input_path)
        if cache_path.exists():
            manifest.inputs[str(cache_path)] = _sha256(cache_path)
        gold = None
        if gold_path is not None:
            gold_path = Path(gold_path)
            gold = load_gold_standard(gold_path)
            manifest.inputs[str(gold_path)] = _sha256(gold_path)
        finish_stage("ingest", records=len(records))

        stage = "augment"
        cache = AugmentationCache(cache_path if cache_path.exists() else None)
        provider = make_provider(config, offline)
        counts: dict[str, int] = {}
        artifacts = prepare_corpus(config, records, cache, provider, counts)
        finish_stage("augment", augmented=counts["augmented"], corrected=counts["corrected"])

        stage = "parse"
        cleaned_path = out_dir / "cleaned.tsv"
        _write_cleaned(artifacts.names, cleaned_path)
        created.append(cleaned_path)
        finish_stage(
            "parse",
            type1=counts["type1"],
            type2=counts["type2"],
            degenerate=counts["degenerate"],
        )

        stage = "match"
        weights = config.weight_vector()
        scored = score_pairs(
            artifacts.names_by_id,
            artifacts.candidates,
            artifacts.domain_info,
            artifacts.embeddings,
            weights,
        )
        pairs_path = out_dir / "pairs.tsv"
        write_scored_pairs(scored, pairs_path)
        created.append(pairs_path)
        finish_stage("match", candidate_pairs=len(scored))

        stage = "filter"
        params = config.filter_params()
        graph = build_graph(scored, artifacts.records, params)
        partition = refine_communities(graph, params)
        partition = assign_canonical_names(
            partition,
            artifacts.records,
            {n.record_id: n.cleaned for n in artifacts.names},
            artifacts.embeddings,
            strategy=params.naming,
        )
        mapping_path = out_dir / "mapping.tsv"
        write_mapping(partition, artifacts.records, mapping_path)
        created.append(mapping_path)
        finish_stage(
            "filter",
            edges=graph.number_of_edges(),
            communities=partition.n_communities,
        )

        stage = "summary"
        summary = summarize_partition(partition, artifacts.records)
        summary_path = out_dir / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        created.append(summary_path)
        finish_stage("summary")

        if gold is not None:
            stage = "evaluate"
            report = build_report(
                partition.assignments,
                gold,
                n_before=len(records),
                n_after=partition.n_communities,
            )
            eval_path = out_dir / "eval.json"
            eval_path.write_text(report.to_json(), encoding="utf-8")
            created.append(eval_path)
            finish_stage("evaluate")

        for artifact in created:
            manifest.outputs[str(artifact)] = _sha256(artifact)
        manifest_path = out_dir / "manifest.json"
        manifest_path.write_text(manifest.to_json(), encoding="utf-8")
        return manifest
    except (ConfigError, InputError):
        for artifact in created:
            artifact.unlink(missing_ok=True)
        raise
    except Exception as exc:
        for artifact in created:
            artifact.unlink(missing_ok=True)
        raise StageError(stage, str(exc)) from exc


def summarize_partition(
    partition: Partition,
    records: Mapping[str, AssigneeRecord],
    top_k: int = 10,
) -> dict:
    """Reduction rate, community count, and the largest communities."""
    n_before = len(partition.assignments)
    n_after = partition.n_communities
    groups = partition.communities()
    largest = sorted(
        groups.items(), key=lambda item: (-len(item[1]), item[0])
    )[:top_k]
    return {
        "n_records": n_before,
        "n_communities": n_after,
        "reduction_rate": reduction_rate(n_before, n_after) if n_before else 0.0,
        "largest_communities": [
            {
                "community_id": cid,
                "size": len(members),
                "canonical_name": partition.canonical.get(cid, ""),
                "portfolio": sum(records[m].patent_count for m in members if m in records),
            }
            for cid, members in largest
        ],
    }


def summarize_mapping(mapping_rows: Sequence[dict], records: Optional[Mapping[str, AssigneeRecord]] = None, top_k: int = 10) -> dict:
    """Summary for an already-written mapping file."""
    partition = Partition(
        assignments={row["record_id"]: row["community_id"] for row in mapping_rows},
        canonical={row["community_id"]: row["canonical_name"] for row in mapping_rows},
    )
    if records is None:
        records = {
            row["record_id"]: AssigneeRecord(record_id=row["record_id"], raw_name=row["raw_name"] or "?")
            for row in mapping_rows
        }
    return summarize_partition(partition, records, top_k=top_k)


def build_tuning_objective(
    config: PipelineConfig,
    artifacts: CorpusArtifacts,
    gold: Sequence,
) -> Callable[[dict[str, float]], float]:
    """Pairwise-F1 objective over the prepared corpus.

    Condition vectors are evaluated once for the blocked candidate set; each
    trial only re-scores them with its weights and re-runs the filter stage.
    """
    base_conditions = score_pairs(
        artifacts.names_by_id,
        artifacts.candidates,
        artifacts.domain_info,
        artifacts.embeddings,
        WeightVector.unit(),
    )
    conditions = [(p.id_a, p.id_b, p.conditions) for p in base_conditions]

    def objective(params: dict[str, float]) -> float:
        weights, filter_params = config.tuning_params_as_config(params)
        rescored = [
            ScoredPair(id_a=a, id_b=b, conditions=c, score=matching_score(c, weights))
            for a, b, c in conditions
        ]
        graph = build_graph(rescored, artifacts.records, filter_params)
        partition = refine_communities(graph, filter_params)
        report = build_report(partition.assignments, gold)
        return report.f1

    return objective


def tune_pipeline(
    config: PipelineConfig,
    input_path: str | Path,
    cache_path: str | Path,
    gold_path: str | Path,
    n_trials: Optional[int] = None,
    store_path: str | Path | None = None,
) -> TrialHistory:
    """Prepare the corpus once, then TPE-search the filter/score parameters.

    The incumbent configuration runs as trial 0, so the best trial can never
    fall below the configured baseline.
    """
    records = load_assignee_table(input_path)
    gold = load_gold_standard(gold_path)
    cache_path = Path(cache_path)
    cache = AugmentationCache(cache_path if cache_path.exists() else None)
    artifacts = prepare_corpus(config, records, cache, provider=None)
    objective = build_tuning_objective(config, artifacts, gold)
    space = config.search_space()
    tpe = config.tpe_config()
    trials = n_trials if n_trials is not None else config["tune"]["trials"]
    incumbent = config.incumbent_point(space)
    return optimize(
        objective,
        space,
        trials,
        tpe,
        initial=[incumbent],
        store_path=store_path,
    )
