#!/usr/bin/env python3
"""
Shared fixtures for the stage and pipeline tests

A six-paper corpus (two sets of three papers) written into tmp_path, and a
scripted responder that answers every stage prompt from the same paper data,
so the whole pipeline runs offline and deterministically.
"""

import json
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pytest

from data_loader import CorpusStore, ingest_corpus
from llm_gateway.api.backends import ScriptedBackend
from llm_gateway.api.llm_client import BackendHandle, LlmGateway, LlmRequest
from llm_gateway.config import BUILTIN_DOMAINS, DomainProfile, Stage, StageProfile, build_profile
from materials_chart.state.system_chart import ChartRow, Mechanism, MechanismSource, SystemChart

TEXT = MechanismSource.FROM_TEXT
KB = MechanismSource.FROM_KNOWLEDGE_BASE

SET_A = "cryogenic twinning"
SET_B = "precipitation hardening"

# paper_id -> (set, title, rows); a row is
# (structure, property, S->P mechanism, source, processing, P->S mechanism, source)
PAPERS: Dict[int, Tuple[str, str, List[Tuple]]] = {
    1: (SET_A, "Cryogenic twinning in a CrCoNi medium-entropy alloy", [
        ("Nanotwins", "Yield strength at 77 K", "Twin boundaries block dislocation glide", TEXT,
         "Cryo-rolling at 77 K", "Low stacking fault energy promotes deformation twinning", TEXT),
        ("Hierarchical twin network", "Elongation at 77 K", "Progressive twinning sustains work hardening", KB,
         "Tensile straining at 77 K", "Secondary twin systems activate at high stress", TEXT),
    ]),
    2: (SET_A, "Stacking fault engineering in FeMnCoCr alloys", [
        ("Stacking faults", "Fracture toughness at 77 K", "Faults blunt advancing crack tips", TEXT,
         "Annealing at 1173 K", "Recrystallization lowers the fault energy", KB),
    ]),
    3: (SET_A, "Transformation-induced plasticity at cryogenic temperature", [
        ("HCP martensite laths", "Ultimate tensile strength at 77 K", "Martensite transformation delays necking", TEXT,
         "Quenching from 1273 K", "Metastable FCC phase transforms under strain", TEXT),
    ]),
    4: (SET_B, "L12 precipitation strengthening in FCC high-entropy alloys", [
        ("Coherent L12 precipitates", "Yield strength", "Precipitates resist dislocation shearing", TEXT,
         "Aging at 1073 K", "Coherent nucleation from a supersaturated matrix", TEXT),
    ]),
    5: (SET_B, "Heterogeneous grain structures for strength and ductility", [
        ("Bimodal grains", "Uniform elongation", "Back stress from grain heterogeneity", TEXT,
         "Partial recrystallization at 973 K", "Selective recovery of deformed regions", KB),
    ]),
    6: (SET_B, "Multi-phase precipitation in AlCoCrFeNi alloys", [
        ("Nanoscale B2 particles", "Yield strength at 293 K", "Particles pin gliding dislocations", TEXT,
         "Aging at 1023 K", "Spinodal decomposition of the BCC matrix", TEXT),
        ("Coherent L12 shells", "N/A", "Core-shell interfaces pin dislocations", KB,
         "Aging at 1023 K", "Heterogeneous nucleation on B2 particles", TEXT),
    ]),
}

_PAPER = re.compile(r"PAPER \((\d+)\)")
_ROW = re.compile(r"Row ([AB]) \(paper \[(\d+)\]\): \|(.*)\|")
_DRAFT = re.compile(r"This is draft (\d+) of (\d+)")
_HYPOTHESIS = re.compile(r"HYPOTHESIS (\d+)\n(.*)", re.DOTALL)
_CHUNK_LINE = re.compile(r"^Hypothesis (\d+) \| papers \[(\d+)\] and \[(\d+)\]", re.MULTILINE)
_MERGE_LINE = re.compile(r"^(C\d+-\d+) \| .*?\| paper pairs ([^|]+?) \|", re.MULTILINE)
_FILL = re.compile(r"row (\d+) has N/A as its (\w+)")


def paper_body(paper_id: int) -> str:
    _, title, rows = PAPERS[paper_id]
    sentences = [f"{title}."]
    for structure, prop, mech_sp, _, processing, mech_ps, _ in rows:
        sentences.append(f"{processing} produces {structure.lower()} because "
                         f"{mech_ps.lower()}. The {structure.lower()} improve "
                         f"{prop.lower()} since {mech_sp.lower()}.")
    sentences.append("Specimens were tested in liquid nitrogen and at room temperature; "
                     "microstructures were characterized by transmission electron microscopy.")
    return "\n\n".join(sentences) + "\n"


def write_corpus(root: Path) -> Tuple[Path, Path]:
    """Write the corpus manifest and paper texts; returns (manifest, text_root)."""
    text_root = root / "texts"
    text_root.mkdir(parents=True, exist_ok=True)
    sets: Dict[str, List[Dict]] = {}
    for paper_id, (label, title, _) in PAPERS.items():
        name = f"paper_{paper_id}.txt"
        (text_root / name).write_text(paper_body(paper_id), encoding="utf-8")
        sets.setdefault(label, []).append(
            {"title": title, "venue": "Acta Materialia", "year": 2020 + paper_id, "file": name})
    manifest = root / "corpus.json"
    manifest.write_text(json.dumps({"sets": [{"label": label, "papers": papers}
                                             for label, papers in sets.items()]}, indent=2),
                        encoding="utf-8")
    return manifest, text_root


def paper_chart(paper_id: int) -> SystemChart:
    """The chart extraction yields for a corpus paper."""
    rows = [
        ChartRow(processing=processing, mech_ps=Mechanism(mech_ps, ps_source), structure=structure,
                 mech_sp=Mechanism(mech_sp, sp_source), property=prop, row_index=i)
        for i, (structure, prop, mech_sp, sp_source, processing, mech_ps, ps_source)
        in enumerate(PAPERS[paper_id][2], start=1)
    ]
    return SystemChart(paper_id=paper_id, rows=rows)


def _cell(text: str, source: MechanismSource) -> str:
    return f"{text} ({source.label})"


def _paper_of(request: LlmRequest) -> int:
    for text in [request.user_prompt] + [t.content for t in request.history]:
        match = _PAPER.search(text)
        if match:
            return int(match.group(1))
    raise AssertionError("request names no paper")


class MaterialsResponder:
    """Answers every stage prompt from PAPERS; None for anything else."""

    def __call__(self, request: LlmRequest) -> Optional[str]:
        prompt = request.user_prompt
        if "Below are ideas found separately" in prompt:
            return self.merge(prompt)
        if "Continue the table from idea" in prompt:
            return "END OF IDEAS"
        if "Categorize the materials design hypotheses" in prompt:
            return self.chunk(prompt)
        if "Judge the scientific grounding" in prompt:
            return self.grounding(prompt)
        if "HYPOTHESIS" in prompt and "synergistic" in prompt:
            return self.synergy(prompt)
        if "Row A (paper [" in prompt:
            return self.hypothesis(prompt)
        if prompt.startswith("The table below lists rows of a materials system chart."):
            return self.tags(prompt)
        if prompt.startswith("In the materials system chart below"):
            return self.fill(prompt)
        if "STRUCTURES\n- " in prompt:
            return self.subtable2(prompt, _paper_of(request))
        if "List the target properties" in prompt:
            return "\n".join(f"- {row[1]}" for row in PAPERS[_paper_of(request)][2])
        if prompt.startswith("For each property you listed"):
            return "\n".join(f"- {row[0]}" for row in PAPERS[_paper_of(request)][2])
        if prompt.startswith("Now connect the properties"):
            return self.subtable1(_paper_of(request))
        return None

    # Extraction

    @staticmethod
    def subtable1(paper_id: int) -> str:
        lines = ["| Property | Mechanism (S→P) | Structure |", "|---|---|---|"]
        for structure, prop, mech_sp, source, *_ in PAPERS[paper_id][2]:
            lines.append(f"| {prop} | {_cell(mech_sp, source)} | {structure} |")
        return "\n".join(lines)

    @staticmethod
    def subtable2(prompt: str, paper_id: int) -> str:
        listed = prompt.split("STRUCTURES\n", 1)[1].split("\n\n", 1)[0]
        wanted = [line[2:].strip() for line in listed.splitlines() if line.startswith("- ")]
        rows = {row[0]: row for row in PAPERS[paper_id][2]}
        lines = ["| Structure | Mechanism (P→S) | Processing |", "|---|---|---|"]
        for structure in wanted:
            _, _, _, _, processing, mech_ps, source = rows[structure]
            lines.append(f"| {structure} | {_cell(mech_ps, source)} | {processing} |")
        return "\n".join(lines)

    # Generation

    @staticmethod
    def hypothesis(prompt: str) -> str:
        rows = {side: (int(paper), [c.strip() for c in cells.split("|")])
                for side, paper, cells in _ROW.findall(prompt)}
        sample = int(_DRAFT.search(prompt).group(1))
        (paper_a, cells_a), (paper_b, cells_b) = rows["A"], rows["B"]
        link = "A(S->P) -> B(P->S)" if sample % 2 else "A(P->S) -> B(S->P)"
        return (
            f"Hypothesis: {cells_b[0]} applied to the alloy with {cells_a[2].lower()} [{paper_a}] "
            f"forms {cells_b[2].lower()} [{paper_b}] whose interfaces feed the twinning response. "
            f"The combination raises strength at 77 K beyond either effect alone.\n"
            f"Structural entities: {cells_a[2]}; {cells_b[2]}\n"
            f"Interdependency: {link}"
        )

    # Evaluation

    @staticmethod
    def synergy(prompt: str) -> str:
        hypothesis_id, text = _HYPOTHESIS.search(prompt).groups()
        hypothesis_id = int(hypothesis_id)
        if hypothesis_id % 3 == 0:
            return "Score: 2\nInterdependence:\nCore structures: none"
        first_sentence = text.strip().split(". ")[0] + "."
        return (f"Score: 5\nInterdependence:\n- \"{first_sentence}\"\n"
                f"Core structures: twins; precipitates")

    @staticmethod
    def grounding(prompt: str) -> str:
        hypothesis_id = int(_HYPOTHESIS.search(prompt).group(1))
        label = "Weak" if hypothesis_id % 4 == 0 else "Strong"
        return f"Label: {label}\nRationale: Twinning remains active at 77 K in low stacking fault energy alloys."

    # Categorization

    @staticmethod
    def chunk(prompt: str) -> str:
        groups: Dict[Tuple[str, str], List[str]] = {}
        for hypothesis_id, paper_a, paper_b in _CHUNK_LINE.findall(prompt):
            groups.setdefault((paper_a, paper_b), []).append(hypothesis_id)
        lines = ["| Idea | Hypotheses | Structural entities | Core concepts |", "|---|---|---|---|"]
        for n, ((paper_a, paper_b), ids) in enumerate(groups.items(), start=1):
            lines.append(f"| {n} | {', '.join(ids)} | twins; precipitates | "
                         f"Precipitate interfaces feeding twinning (papers {paper_a} and {paper_b}) |")
        return "\n".join(lines)

    @staticmethod
    def merge(prompt: str) -> str:
        groups: Dict[str, List[str]] = {}
        for key, pairs in _MERGE_LINE.findall(prompt):
            groups.setdefault(pairs.strip(), []).append(key)
        lines = ["| Idea | Merged ideas | Structural entities | Core concepts |", "|---|---|---|---|"]
        for n, (pairs, keys) in enumerate(groups.items(), start=1):
            lines.append(f"| {n} | {', '.join(keys)} | twins; precipitates | "
                         f"Twin-precipitate synergy for paper pair {pairs} |")
        return "\n".join(lines) + "\nEND OF IDEAS"

    # Visualization

    @staticmethod
    def tags(prompt: str) -> str:
        lines = ["| Row | Tag | Processing | Structure | Property |", "|---|---|---|---|---|"]
        for line in prompt.splitlines():
            cells = [c.strip() for c in line.strip().strip("|").split("|")]
            if len(cells) != 4 or not cells[0].isdigit():
                continue
            row, processing, structure, prop = cells
            lowered = structure.lower()
            tag = ("planar defect" if "twin" in lowered or "fault" in lowered
                   else "precipitate" if "precipitat" in lowered or "particle" in lowered or "shell" in lowered
                   else "grain structure")
            lines.append(f"| {row} | {tag} | {processing} | {structure} | {prop} |")
        return "\n".join(lines)

    @staticmethod
    def fill(prompt: str) -> str:
        row, field = _FILL.search(prompt).groups()
        if field == "property" and row == "2":
            return "Fill: Yield strength at 293 K\nDonor: 1"
        return "keep N/A"


@pytest.fixture
def corpus_files(tmp_path) -> Tuple[Path, Path]:
    return write_corpus(tmp_path / "corpus")


@pytest.fixture
def corpus(corpus_files) -> CorpusStore:
    return ingest_corpus(*corpus_files)


@pytest.fixture
def responder() -> MaterialsResponder:
    return MaterialsResponder()


@pytest.fixture
def scripted_backend(responder) -> ScriptedBackend:
    return ScriptedBackend(responder=responder)


@pytest.fixture
def gateway() -> LlmGateway:
    return LlmGateway(base_delay=0.0, max_delay=0.0)


@pytest.fixture
def handle(gateway, scripted_backend) -> BackendHandle:
    return gateway.handle(scripted_backend)


@pytest.fixture
def domain() -> DomainProfile:
    return BUILTIN_DOMAINS["cryogenic_hea"]


@pytest.fixture
def profile(domain):
    def make(stage: Stage) -> StageProfile:
        return build_profile(stage, domain)
    return make


@pytest.fixture
def charts() -> List[SystemChart]:
    return [paper_chart(paper_id) for paper_id in PAPERS]


@pytest.fixture
def config_path(tmp_path, corpus_files) -> Path:
    path = tmp_path / "pipeline.yaml"
    path.write_text(
        "domain: cryogenic_hea\n"
        "generation:\n"
        "  n_samples: 2\n"
        "retry:\n"
        "  base_delay: 0.01\n"
        "  max_delay: 0.01\n"
        "paths:\n"
        "  corpus_manifest: corpus/corpus.json\n"
        "  text_root: corpus/texts\n"
        "  runs_dir: runs\n"
        "  cache_dir: cache\n",
        encoding="utf-8",
    )
    return path
