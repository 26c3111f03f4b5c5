#!/usr/bin/env python3
"""
Pipeline Manager - stage orchestration for one run

Owns a run directory and runs the stages against it:

    ingest -> extract -> generate -> evaluate -> categorize -> visualize -> audit -> report

Each stage reads only the artifacts it declares and writes its own; a stage
started before its inputs exist fails with StagePrerequisiteError naming the
stage to run first. "all" drives the whole chain as a LangGraph StateGraph.
Stage outputs are deterministic for a given config, corpus and cache.
"""

import asyncio
import logging
from operator import add
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional, Sequence, Tuple, TypedDict

from langgraph.graph import END, START, StateGraph

from data_loader import CorpusStore, ingest_corpus, token_estimate
from llm_gateway.api.llm_client import ChatBackend, LlmGateway
from llm_gateway.config import ConfigError, Stage
from materials_chart.state.hypothesis import (
    CategorizationState,
    EvaluationRecord,
    Hypothesis,
    read_jsonl,
    write_jsonl,
)
from materials_chart.state.system_chart import SystemChart, find_row, knowledge_base_share, write_charts_csv
from materials_chart.utils.audit_metrics import (
    compare_with_human,
    load_annotations,
    load_chart_audits,
    load_mechanism_audits,
    rollup_extraction_audit,
    round_half_up,
)
from materials_chart.utils.chart_graph import (
    GraphBuildError,
    NormalizedChart,
    Origin,
    build_chart_graph,
    build_hypothesis_graph,
    emit_dot,
    split_combined_rows,
)
from materials_chart.utils.table_parser import format_table

from ..core.chart_extractor import ChartExtractor, ExtractionOutcome
from ..core.chart_normalizer import ChartNormalizer
from ..core.hypothesis_evaluator import HypothesisEvaluator
from ..core.hypothesis_generator import HypothesisGenerator, enumerate_pairs
from ..core.idea_categorizer import IdeaCategorizer, coverage_report, pool_from_records
from .pipeline_config import PipelineConfig
from .run_store import RunManifest, RunStore, corpus_digest, derive_run_id, resolve_run_id

STAGES = ("ingest", "extract", "generate", "evaluate", "categorize", "visualize", "audit", "report")

CORPUS = "corpus.json"
CHARTS_CSV = "charts.csv"
EXTRACTION_REPORT = "extraction_report.json"
PAIRS = "pairs.json"
HYPOTHESES = "hypotheses.jsonl"
EVALUATIONS = "evaluations.jsonl"
CHUNK_IDEAS = "chunk_ideas.json"
IDEAS = "ideas.json"
COVERAGE = "coverage.json"
AUDIT = "audit.json"
REPORT_TEXT = "report.txt"
REPORT_JSON = "report.json"

# Artifact -> the stage that writes it.
PRODUCERS = {
    CORPUS: "ingest",
    CHARTS_CSV: "extract",
    HYPOTHESES: "generate",
    EVALUATIONS: "evaluate",
}


class StagePrerequisiteError(RuntimeError):
    """A stage was started before the artifacts it reads exist."""


class PipelineState(TypedDict):
    completed: Annotated[List[str], add]


class PipelineManager:
    """
    Runs pipeline stages against one run directory.

    All backend traffic goes through one LlmGateway; the evaluation stage uses
    the evaluation backend, every other stage the primary backend.
    """

    def __init__(self, config: PipelineConfig, store: RunStore, backend: ChatBackend,
                 eval_backend: Optional[ChatBackend] = None, corpus: Optional[CorpusStore] = None,
                 hypothesis_id: Optional[int] = None):
        """
        Initialize the manager.

        Args:
            config: Validated pipeline config
            store: Run directory
            backend: Primary chat backend
            eval_backend: Evaluation chat backend (primary backend if None)
            corpus: Freshly ingested corpus, written by the ingest stage
            hypothesis_id: Limit visualization to this single hypothesis
        """
        self.config = config
        self.store = store
        self.corpus = corpus
        self.hypothesis_id = hypothesis_id
        self.domain = config.domain_profile()
        self.logger = logging.getLogger(__name__)

        self.gateway = LlmGateway(
            cache_dir=config.resolve(config.paths.cache_dir),
            max_in_flight=config.max_in_flight,
            max_attempts=config.retry.max_attempts,
            base_delay=config.retry.base_delay,
            max_delay=config.retry.max_delay,
        )
        self.primary = self.gateway.handle(backend)
        self.evaluation = self.gateway.handle(eval_backend or backend)

        self.graph = self._build_graph()

    @classmethod
    def open_run(cls, config: PipelineConfig, backend: ChatBackend,
                 eval_backend: Optional[ChatBackend] = None, run_id: Optional[str] = None,
                 resume: bool = False, hypothesis_id: Optional[int] = None,
                 create: bool = True) -> "PipelineManager":
        """
        Ingest the corpus, derive the run id and bind a manager to the run directory.

        The same config and corpus derive the same id. With create (ingest,
        all) an existing run is left alone unless resume is set, and a
        numbered sibling is created. Without create the stage continues the
        run named by run_id, or the derived one, which must already exist.

        Raises:
            CorpusError: The corpus manifest or texts are invalid
            ValueError: create is False and the run does not exist
        """
        corpus = ingest_corpus(config.resolve(config.paths.corpus_manifest),
                               config.resolve(config.paths.text_root))
        digest = corpus_digest(corpus)
        runs_dir = config.resolve(config.paths.runs_dir)
        base_id = derive_run_id(config.snapshot(), digest)

        if create:
            resolved = resolve_run_id(runs_dir, base_id, resume=resume, explicit=run_id)
        else:
            resolved = run_id or base_id
            if not (runs_dir / resolved).is_dir():
                raise ValueError(f"Unknown run id: {resolved}; run 'ingest' first or pass --run-id")

        store = RunStore(runs_dir, resolved)
        manager = cls(config, store, backend, eval_backend, corpus=corpus,
                      hypothesis_id=hypothesis_id)
        manager._ensure_manifest(digest)
        return manager

    def _ensure_manifest(self, digest: str):
        if self.store.load_manifest() is not None:
            return
        with self.store.locked():
            if self.store.load_manifest() is not None:
                return
            self.store.save_manifest(RunManifest(
                run_id=self.store.run_id,
                config=self.config.snapshot(),
                corpus_digest=digest,
                backend_id=self.primary.backend_id,
                eval_backend_id=self.evaluation.backend_id,
            ))
        self.logger.info(f"Created run {self.store.run_id} at {self.store.root}")

    # Orchestration

    def _build_graph(self):
        workflow = StateGraph(PipelineState)
        for stage in STAGES:
            workflow.add_node(stage, self._stage_node(stage))
        workflow.add_edge(START, STAGES[0])
        for prior, stage in zip(STAGES, STAGES[1:]):
            workflow.add_edge(prior, stage)
        workflow.add_edge(STAGES[-1], END)
        return workflow.compile()

    def _stage_node(self, stage: str):
        async def node(state: PipelineState) -> Dict[str, Any]:
            await self.run_stage(stage)
            return {"completed": [stage]}
        return node

    async def execute(self, stage: str) -> List[str]:
        """Run a stage (or "all") while holding the run lock; returns the stages completed."""
        with self.store.locked():
            if stage == "all":
                final = await self.graph.ainvoke({"completed": []})
                return final["completed"]
            await self.run_stage(stage)
            return [stage]

    def _required_inputs(self, stage: str) -> List[str]:
        required = {
            "ingest": [],
            "extract": [CORPUS],
            "generate": [CORPUS, CHARTS_CSV],
            "evaluate": [HYPOTHESES],
            "categorize": [HYPOTHESES, EVALUATIONS],
            "visualize": [CORPUS, CHARTS_CSV, HYPOTHESES],
            "audit": [CORPUS],
            "report": [CORPUS],
        }[stage]
        if stage == "visualize" and self.hypothesis_id is None:
            required.append(EVALUATIONS)
        if stage == "audit" and self.config.paths.annotations:
            required.append(EVALUATIONS)
        return required

    def check_prerequisites(self, stage: str):
        """
        Raises:
            StagePrerequisiteError: An input of the stage is missing
        """
        if stage not in STAGES:
            raise ValueError(f"Unknown stage '{stage}'. Stages: {', '.join(STAGES)}")
        for name in self._required_inputs(stage):
            if not self.store.exists(name):
                producer = PRODUCERS[name]
                self.logger.error(f"Stage {stage} needs {name} in run {self.store.run_id}")
                raise StagePrerequisiteError(
                    f"Stage '{stage}' needs {name}, which run {self.store.run_id} does not have; "
                    f"run '{producer}' first"
                )

    async def run_stage(self, stage: str) -> List[str]:
        """Run one stage and record its outputs in the manifest."""
        self.check_prerequisites(stage)
        self.logger.info(f"Stage {stage} starting (run {self.store.run_id})")
        outputs = await getattr(self, f"_stage_{stage}")()

        manifest = self.store.load_manifest()
        if manifest is not None:
            manifest.record_stage(stage, outputs)
            self.store.save_manifest(manifest)

        self.logger.info(f"Stage {stage} done: {len(outputs)} outputs "
                         f"({self.gateway.get_cache_stats()})")
        return outputs

    # Artifact loading

    def _load_corpus(self) -> CorpusStore:
        return CorpusStore.from_dict(self.store.read_json(CORPUS))

    def _load_charts(self) -> List[SystemChart]:
        charts = [SystemChart.from_dict(self.store.read_json(f"charts/{p.name}"))
                  for p in self.store.files("charts", "*.json")]
        return sorted(charts, key=lambda c: c.paper_id)

    def _load_hypotheses(self) -> List[Hypothesis]:
        return [Hypothesis.from_dict(d) for d in read_jsonl(self.store.path(HYPOTHESES))]

    def _load_evaluations(self) -> List[EvaluationRecord]:
        return [EvaluationRecord.from_dict(d) for d in read_jsonl(self.store.path(EVALUATIONS))]

    def _set_labels(self, corpus: CorpusStore) -> Tuple[str, str]:
        labels = self.config.generation.sets or list(corpus.sets)[:2]
        unknown = [label for label in labels if label not in corpus.sets]
        if unknown:
            raise ConfigError(f"generation.sets names unknown paper sets {unknown}; "
                              f"corpus sets are {list(corpus.sets)}")
        return labels[0], labels[1]

    def _clear(self, subdir: str, pattern: str):
        for path in self.store.files(subdir, pattern):
            path.unlink()

    # Stages

    async def _stage_ingest(self) -> List[str]:
        if self.corpus is None:
            raise ValueError("No corpus was ingested for this run")
        self.store.write_json(CORPUS, self.corpus.to_dict())
        return [CORPUS]

    async def _stage_extract(self) -> List[str]:
        corpus = self._load_corpus()
        extractor = ChartExtractor(self.primary, self.config.stage_profile(Stage.EXTRACTION))
        outcomes = await extractor.extract_corpus(corpus.papers)
        charts = [o.chart for o in outcomes if o.chart is not None]
        if not charts:
            self.logger.error("Extraction produced no chart")
            raise RuntimeError("Extraction failed for every paper")

        self._clear("charts", "*.json")
        outputs = []
        for chart in charts:
            name = f"charts/{chart.paper_id}.json"
            self.store.write_json(name, chart.to_dict())
            outputs.append(name)
        write_charts_csv(charts, self.store.path(CHARTS_CSV))
        self.store.write_json(EXTRACTION_REPORT, self.extraction_report(corpus, outcomes))
        return outputs + [CHARTS_CSV, EXTRACTION_REPORT]

    @staticmethod
    def extraction_report(corpus: CorpusStore, outcomes: Sequence[ExtractionOutcome]) -> Dict[str, Any]:
        """Per-paper extraction status and the corpus token-reduction factor."""
        papers: Dict[str, Dict[str, Any]] = {}
        body_tokens = chart_tokens = 0
        for outcome in outcomes:
            paper = corpus.paper(outcome.paper_id)
            entry: Dict[str, Any] = {
                "title": paper.title,
                "set": paper.set_label,
                "status": "extracted" if outcome.chart is not None else "failed",
                "error": outcome.error,
                "warnings": outcome.warnings or [],
                "body_tokens": paper.token_estimate,
            }
            if outcome.chart is not None:
                chart = outcome.chart
                estimate = chart.chart_token_estimate or token_estimate(chart.to_table())
                entry.update(rows=len(chart.rows), chart_tokens=estimate,
                             knowledge_base_share=round(knowledge_base_share(chart), 4))
                body_tokens += paper.token_estimate
                chart_tokens += estimate
            papers[str(outcome.paper_id)] = entry

        extracted = sum(1 for o in outcomes if o.chart is not None)
        return {
            "papers": papers,
            "extracted": extracted,
            "failed": len(outcomes) - extracted,
            "body_tokens": body_tokens,
            "chart_tokens": chart_tokens,
            "token_reduction_factor": round(body_tokens / chart_tokens, 2) if chart_tokens else None,
        }

    async def _stage_generate(self) -> List[str]:
        corpus = self._load_corpus()
        charts = self._load_charts()
        label_a, label_b = self._set_labels(corpus)
        ids_a, ids_b = set(corpus.sets[label_a]), set(corpus.sets[label_b])
        settings = self.config.generation

        pairs = enumerate_pairs([c for c in charts if c.paper_id in ids_a],
                                [c for c in charts if c.paper_id in ids_b],
                                cap=settings.pair_cap, seed=settings.seed)
        generator = HypothesisGenerator(
            self.primary, self.config.stage_profile(Stage.GENERATION), domain=self.domain,
            n_samples=settings.n_samples, known_paper_ids=set(corpus.paper_ids),
        )
        hypotheses = await generator.generate(pairs, charts)

        self.store.write_json(PAIRS, {
            "set_a": label_a,
            "set_b": label_b,
            "pairs": [p.to_dict() for p in pairs],
            "skipped_pairs": sorted(generator.skipped_pairs),
            "failed_samples": generator.failed_samples,
        })
        write_jsonl((h.to_dict() for h in hypotheses), self.store.path(HYPOTHESES))
        return [PAIRS, HYPOTHESES]

    async def _stage_evaluate(self) -> List[str]:
        hypotheses = self._load_hypotheses()
        evaluator = HypothesisEvaluator(self.evaluation, self.config.stage_profile(Stage.EVALUATION),
                                        self.domain)
        records = await evaluator.evaluate_all(hypotheses)
        for what, ids in evaluator.unevaluated.items():
            if ids:
                self.logger.warning(f"{len(ids)} hypotheses without {what} evaluation: {sorted(ids)}")
        write_jsonl((r.to_dict() for r in records), self.store.path(EVALUATIONS))
        return [EVALUATIONS]

    async def _stage_categorize(self) -> List[str]:
        hypotheses = self._load_hypotheses()
        records = self._load_evaluations()
        pool = pool_from_records(hypotheses, records)
        synergy = {r.hypothesis_id: r.synergy for r in records if r.synergy is not None}

        failed_chunks: List[int] = []
        if pool:
            settings = self.config.categorization
            categorizer = IdeaCategorizer(
                self.primary, self.config.stage_profile(Stage.CATEGORIZATION),
                chunks=settings.chunks, idea_cap=settings.idea_cap,
                turn_budget=settings.turn_budget,
            )
            state, per_chunk = await categorizer.categorize(pool, synergy)
            failed_chunks = categorizer.failed_chunks
        else:
            self.logger.warning("The Strong and Synergistic pool is empty; no ideas to categorize")
            state, per_chunk = CategorizationState(), []

        coverage = coverage_report(state, pool)
        coverage["pool"] = [h.hypothesis_id for h in pool]
        coverage["failed_chunks"] = sorted(failed_chunks)

        self.store.write_json(CHUNK_IDEAS, [[i.to_dict() for i in chunk] for chunk in per_chunk])
        self.store.write_json(IDEAS, [i.to_dict() for i in state.ideas])
        self.store.write_json(COVERAGE, coverage)
        return [CHUNK_IDEAS, IDEAS, COVERAGE]

    async def _normalize(self, normalizer: ChartNormalizer, chart: SystemChart) -> NormalizedChart:
        split = split_combined_rows(chart, self.config.visualization.list_delimiter)
        tagged = await normalizer.tag_and_simplify(split)
        return await normalizer.fill_na(tagged)

    async def _stage_visualize(self) -> List[str]:
        corpus = self._load_corpus()
        charts = self._load_charts()
        hypotheses = self._load_hypotheses()
        _, label_b = self._set_labels(corpus)
        ids_b = set(corpus.sets[label_b])
        outputs: List[str] = []

        if self.hypothesis_id is not None:
            targets = [h for h in hypotheses if h.hypothesis_id == self.hypothesis_id]
            if not targets:
                raise ValueError(f"Run {self.store.run_id} has no hypothesis {self.hypothesis_id}")
        else:
            self._clear("graphs", "*.dot")
            self._clear("normalized", "*.json")
            normalizer = ChartNormalizer(self.primary, self.config.stage_profile(Stage.VISUALIZATION))
            normalized = await asyncio.gather(*(self._normalize(normalizer, c) for c in charts))
            for chart in normalized:
                origin = Origin.SET_B if chart.paper_id in ids_b else Origin.SET_A
                name = f"normalized/{chart.paper_id}.json"
                self.store.write_json(name, chart.to_dict())
                dot_name = f"graphs/paper_{chart.paper_id}.dot"
                self.store.write_text(dot_name, emit_dot(build_chart_graph(chart, origin)))
                outputs += [name, dot_name]
            if normalizer.rejected_fills:
                self.logger.warning(f"{normalizer.rejected_fills} N/A fills rejected")
            targets = pool_from_records(hypotheses, self._load_evaluations())

        failed = 0
        for hypothesis in targets:
            try:
                graph = self._hypothesis_graph(hypothesis, charts)
            except GraphBuildError as e:
                if self.hypothesis_id is not None:
                    raise
                self.logger.warning(f"Skipping graph of hypothesis {hypothesis.hypothesis_id}: {e}")
                failed += 1
                continue
            name = f"graphs/hypothesis_{hypothesis.hypothesis_id}.dot"
            self.store.write_text(name, emit_dot(graph))
            outputs.append(name)

        self.logger.info(f"Rendered {len(outputs)} artifacts, {failed} hypothesis graphs failed")
        return outputs

    @staticmethod
    def _hypothesis_graph(hypothesis: Hypothesis, charts: Sequence[SystemChart]):
        pair = hypothesis.pair
        row_a = find_row(charts, pair.a.paper_id, pair.a.row_index)
        row_b = find_row(charts, pair.b.paper_id, pair.b.row_index)
        if row_a is None or row_b is None:
            raise GraphBuildError(f"Hypothesis {hypothesis.hypothesis_id}: source rows "
                                  f"{pair.a.to_list()} / {pair.b.to_list()} not in the charts")
        return build_hypothesis_graph(hypothesis, row_a, row_b, pair.a.paper_id, pair.b.paper_id)

    def _compare_annotated(self, kind: str, model: Dict[int, str], human: Dict[int, str],
                           positive: str) -> Optional[Dict[str, Any]]:
        """Metrics over annotated hypotheses that have a model label; None if none do."""
        skipped = sorted(set(human) - set(model))
        if skipped:
            self.logger.warning(f"Audit: no model {kind} label for annotated hypotheses {skipped}, "
                                f"leaving them out")
        aligned = {hid: label for hid, label in human.items() if hid in model}
        if not aligned:
            self.logger.warning(f"Audit: no annotated hypothesis has a model {kind} label")
            return None
        return compare_with_human(model, aligned, positive).to_dict()

    async def _stage_audit(self) -> List[str]:
        paths = self.config.paths
        audit: Dict[str, Any] = {"synergy": None, "grounding": None, "extraction": None}

        if paths.annotations:
            annotations = load_annotations(self.config.resolve(paths.annotations))
            records = {r.hypothesis_id: r for r in self._load_evaluations()}
            model_synergy = {hid: records[hid].synergy.label.value for hid in annotations
                             if hid in records and records[hid].synergy is not None}
            model_grounding = {hid: records[hid].grounding.label.value for hid in annotations
                               if hid in records and records[hid].grounding is not None}
            human_synergy = {hid: s for hid, (s, _) in annotations.items()}
            human_grounding = {hid: g for hid, (_, g) in annotations.items()}
            audit["synergy"] = self._compare_annotated(
                "synergy", model_synergy, human_synergy, "Synergistic")
            audit["grounding"] = self._compare_annotated(
                "grounding", model_grounding, human_grounding, "Strong")

        if paths.chart_audits or paths.mechanism_audits:
            hmi = load_chart_audits(self.config.resolve(paths.chart_audits)) if paths.chart_audits else []
            mechanisms = (load_mechanism_audits(self.config.resolve(paths.mechanism_audits))
                          if paths.mechanism_audits else {})
            audit["extraction"] = rollup_extraction_audit(hmi, mechanisms)

        if not any(audit.values()):
            self.logger.info("No annotation or audit files configured; audit is empty")
        self.store.write_json(AUDIT, audit)
        return [AUDIT]

    async def _stage_report(self) -> List[str]:
        report = self.build_report()
        self.store.write_json(REPORT_JSON, report)
        self.store.write_text(REPORT_TEXT, render_report(report))
        return [REPORT_JSON, REPORT_TEXT]

    def _optional_json(self, name: str) -> Optional[Any]:
        return self.store.read_json(name) if self.store.exists(name) else None

    def build_report(self) -> Dict[str, Any]:
        """Run summary from whatever artifacts the run holds."""
        corpus = self._load_corpus()
        extraction = self._optional_json(EXTRACTION_REPORT)
        coverage = self._optional_json(COVERAGE)
        ideas = self._optional_json(IDEAS)

        hypotheses = self._load_hypotheses() if self.store.exists(HYPOTHESES) else None
        records = self._load_evaluations() if self.store.exists(EVALUATIONS) else None
        by_id = {h.hypothesis_id: h for h in hypotheses or []}

        listing = []
        for idea in ideas or []:
            pairs = sorted({(by_id[h].pair.a.paper_id, by_id[h].pair.b.paper_id)
                            for h in idea["member_hypotheses"] if h in by_id})
            listing.append({
                "idea_id": idea["idea_id"],
                "member_hypotheses": idea["member_hypotheses"],
                "structural_entities": idea["structural_entities"],
                "core_concept": idea["core_concept"],
                "paper_pairs": [list(p) for p in pairs],
            })

        return {
            "run_id": self.store.run_id,
            "domain": self.domain.name,
            "papers": {
                "total": len(corpus.papers),
                "sets": {label: len(ids) for label, ids in corpus.sets.items()},
            },
            "extraction": {
                "extracted": extraction["extracted"],
                "failed": extraction["failed"],
                "token_reduction_factor": extraction["token_reduction_factor"],
            } if extraction else None,
            "funnel": {
                "hypotheses": len(hypotheses) if hypotheses is not None else None,
                "unevaluated": sum(1 for r in records if not r.evaluated) if records is not None else None,
                "pool": coverage["pool_size"] if coverage else None,
                "ideas": len(ideas) if ideas is not None else None,
            },
            "categorization": {
                "covered": coverage["covered"],
                "dropped": coverage["dropped"],
                "loss_fraction": coverage["loss_fraction"],
                "halted": coverage["halted"],
                "turn_budget_exhausted": coverage["turn_budget_exhausted"],
            } if coverage else None,
            "audit": self._optional_json(AUDIT),
            "ideas": listing,
        }


def _count(value: Optional[int]) -> str:
    return "-" if value is None else str(value)


def _yes_no(value: Optional[bool]) -> str:
    return "n/a" if value is None else ("yes" if value else "no")


def _metrics_line(metrics: Dict[str, Any]) -> str:
    def fmt(value: Optional[float]) -> str:
        return "n/a" if value is None else f"{round_half_up(value):.2f}"
    return (f"accuracy ({fmt(metrics['accuracy'])}), precision ({fmt(metrics['precision'])}), "
            f"recall ({fmt(metrics['recall'])}), and F1 ({fmt(metrics['f1'])}) "
            f"[tp={metrics['tp']} fp={metrics['fp']} fn={metrics['fn']} tn={metrics['tn']}]")


def render_report(report: Dict[str, Any]) -> str:
    """Plain-text rendering of build_report()."""
    papers = report["papers"]
    sets = ", ".join(f'set "{label}": {n}' for label, n in papers["sets"].items())
    funnel = report["funnel"]
    lines = [
        f"hypoForge run {report['run_id']}",
        f"Domain: {report['domain']}",
        f"Papers: {papers['total']} ({sets})",
    ]

    extraction = report["extraction"]
    if extraction:
        factor = extraction["token_reduction_factor"]
        lines.append(f"Charts: {extraction['extracted']} extracted, {extraction['failed']} failed; "
                     f"token reduction factor {'n/a' if factor is None else f'{factor:.2f}'}")

    lines.append(f"Funnel: {_count(funnel['hypotheses'])} → {_count(funnel['pool'])} → "
                 f"{_count(funnel['ideas'])} ideas")
    if funnel["unevaluated"]:
        lines.append(f"Unevaluated hypotheses: {funnel['unevaluated']}")

    categorization = report["categorization"]
    if categorization:
        lines.append(
            f"Categorization loss: {categorization['loss_fraction']:.3f} "
            f"({categorization['dropped']} of {categorization['covered'] + categorization['dropped']} "
            f"pool hypotheses dropped); halted: {_yes_no(categorization['halted'])}; "
            f"turn budget exhausted: {_yes_no(categorization['turn_budget_exhausted'])}"
        )

    audit = report["audit"] or {}
    if audit.get("synergy") or audit.get("grounding") or audit.get("extraction"):
        lines.append("")
        lines.append("Audit")
    for criterion in ("synergy", "grounding"):
        if audit.get(criterion):
            lines.append(f"  {criterion.capitalize()} vs human: {_metrics_line(audit[criterion])}")
    extraction_audit = audit.get("extraction")
    if extraction_audit:
        hmi = extraction_audit["average_hmi_percent"]
        fidelity = extraction_audit["average_fidelity"]
        lines.append(
            f"  Extraction: average HMI {'n/a' if hmi is None else f'{hmi:.2f}'}, "
            f"average mechanism fidelity {'n/a' if fidelity is None else f'{fidelity:.2f}'}, "
            f"meets threshold: {_yes_no(extraction_audit['meets_threshold'])}"
        )

    if report["ideas"]:
        lines.append("")
        lines.append(format_table(
            ["Idea", "Hypotheses", "Structural entities", "Core concepts", "Paper pairs"],
            ([idea["idea_id"],
              ", ".join(str(h) for h in idea["member_hypotheses"]),
              "; ".join(idea["structural_entities"]),
              idea["core_concept"],
              ", ".join(f"[{a}]-[{b}]" for a, b in idea["paper_pairs"])]
             for idea in report["ideas"]),
        ))
    return "\n".join(lines) + "\n"


def open_report(runs_dir: Path, run_id: str) -> str:
    """
    The rendered report of an existing run.

    Raises:
        ValueError: Unknown run id or a run without a report
    """
    store = RunStore(runs_dir, run_id)
    if not store.exists():
        raise ValueError(f"Unknown run id: {run_id}")
    if not store.exists(REPORT_TEXT):
        raise ValueError(f"Run {run_id} has no report yet; run 'report' first")
    return store.read_text(REPORT_TEXT)
