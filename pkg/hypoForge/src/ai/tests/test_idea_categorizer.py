#!/usr/bin/env python3
"""
Tests for pool filtering, chunking and the two-step categorization
"""

import logging
from typing import Dict, List, Tuple

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ai.core.idea_categorizer import (
    IdeaCategorizer,
    chunk_pool,
    coverage_report,
    filter_pool,
    pool_from_records,
)
from llm_gateway.api.backends import ScriptedBackend, ScriptRule
from llm_gateway.config import Stage
from materials_chart.state.hypothesis import (
    CategorizationState,
    EvaluationRecord,
    GroundingEvaluation,
    GroundingLabel,
    Hypothesis,
    Idea,
    RowPair,
    RowRef,
    SynergyEvaluation,
    SynergyLabel,
)


def make_pool(pairs: Dict[int, Tuple[int, int]]) -> List[Hypothesis]:
    return [
        Hypothesis(pair=RowPair(hypothesis_id, RowRef(a, 1), RowRef(b, 1)),
                   text=f"Twins from paper [{a}] seed precipitates from paper [{b}].",
                   cited_papers=[a, b], hypothesis_id=hypothesis_id)
        for hypothesis_id, (a, b) in pairs.items()
    ]


def merge_rows(first: int, last: int, marker: bool = False) -> str:
    lines = ["| Idea | Merged ideas | Structural entities | Core concepts |", "|---|---|---|---|"]
    lines += [f"| {n} | C1-{n} | twins | Concept {n} |" for n in range(first, last + 1)]
    return "\n".join(lines) + ("\nEND OF IDEAS" if marker else "")


def singleton_ideas(count: int) -> List[Idea]:
    return [Idea(idea_id=n, member_hypotheses=[n], structural_entities=["twins"],
                 core_concept=f"Concept {n}", source_pair_signature={(1, 4)})
            for n in range(1, count + 1)]


@pytest.fixture
def categorizer_for(gateway, profile):
    def make(backend, **kwargs):
        return IdeaCategorizer(gateway.handle(backend), profile(Stage.CATEGORIZATION), **kwargs)
    return make


class TestFilterPool:

    @pytest.fixture
    def pool(self):
        return make_pool({n: (1, 4) for n in range(1, 6)})

    def test_strong_and_synergistic_only(self, pool, caplog):
        synergy = {
            1: SynergyEvaluation(1, 5, SynergyLabel.SYNERGISTIC, ["s"]),
            2: SynergyEvaluation(2, 2, SynergyLabel.ADDITIVE),
            3: SynergyEvaluation(3, 4, SynergyLabel.SYNERGISTIC, ["s"]),
            4: SynergyEvaluation(4, 4, SynergyLabel.SYNERGISTIC, ["s"]),
        }
        grounding = {
            1: GroundingEvaluation(1, GroundingLabel.STRONG),
            2: GroundingEvaluation(2, GroundingLabel.STRONG),
            3: GroundingEvaluation(3, GroundingLabel.WEAK),
            4: GroundingEvaluation(4, GroundingLabel.STRONG),
            5: GroundingEvaluation(5, GroundingLabel.STRONG),
        }
        with caplog.at_level(logging.WARNING):
            filtered = filter_pool(pool[::-1], synergy, grounding)
        assert [h.hypothesis_id for h in filtered] == [1, 4]
        assert "1 unevaluated hypotheses excluded" in caplog.text

    def test_without_evaluations(self, pool):
        assert filter_pool(pool, {}, {}) == []

    def test_from_records(self, pool):
        records = [
            EvaluationRecord(1, SynergyEvaluation(1, 5, SynergyLabel.SYNERGISTIC, ["s"]),
                             GroundingEvaluation(1, GroundingLabel.STRONG)),
            EvaluationRecord(2, None, GroundingEvaluation(2, GroundingLabel.STRONG)),
        ]
        assert [h.hypothesis_id for h in pool_from_records(pool, records)] == [1]


class TestChunkPool:

    def test_near_equal_sizes(self):
        chunks = chunk_pool(list(range(14)), 5)
        assert [len(c) for c in chunks] == [3, 3, 3, 3, 2]
        assert [item for chunk in chunks for item in chunk] == list(range(14))

    def test_fewer_items_than_chunks(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert chunk_pool(["a", "b"], 5) == [["a"], ["b"]]
        assert "singleton chunks" in caplog.text

    def test_invalid(self):
        with pytest.raises(ValueError):
            chunk_pool([], 5)
        with pytest.raises(ValueError):
            chunk_pool([1, 2], 0)

    @settings(max_examples=500)
    @given(st.integers(min_value=1, max_value=200), st.integers(min_value=1, max_value=12))
    def test_partition_properties(self, size, k):
        pool = list(range(size))
        chunks = chunk_pool(pool, k)
        sizes = [len(c) for c in chunks]
        assert [item for chunk in chunks for item in chunk] == pool
        assert len(chunks) == min(k, size)
        assert max(sizes) - min(sizes) <= 1
        assert sizes == sorted(sizes, reverse=True)


class TestCategorizeChunk:

    async def test_ideas_by_paper_pair(self, categorizer_for, scripted_backend):
        pool = make_pool({1: (1, 4), 2: (1, 4), 3: (2, 5)})
        ideas = await categorizer_for(scripted_backend).categorize_chunk([(h, None) for h in pool])

        assert [idea.member_hypotheses for idea in ideas] == [[1, 2], [3]]
        assert [idea.source_pair_signature for idea in ideas] == [{(1, 4)}, {(2, 5)}]
        assert ideas[0].structural_entities == ["twins", "precipitates"]
        prompt = scripted_backend.ledger[0][1].user_prompt
        assert "Hypothesis 3 | papers [2] and [5] | core structural entities: n/a" in prompt

    async def test_synergy_sentences_describe_the_mechanism(self, categorizer_for, scripted_backend):
        hypothesis = make_pool({1: (1, 4)})[0]
        synergy = SynergyEvaluation(1, 5, SynergyLabel.SYNERGISTIC, ["Twins pin precipitates."],
                                    ["Nanotwins", "L12 precipitates"])
        await categorizer_for(scripted_backend).categorize_chunk([(hypothesis, synergy)])
        prompt = scripted_backend.ledger[0][1].user_prompt
        assert ('core structural entities: Nanotwins; L12 precipitates | '
                'synergistic mechanism: "Twins pin precipitates."') in prompt

    async def test_foreign_and_repeated_ids(self, categorizer_for, caplog):
        reply = ("| Idea | Hypotheses | Structural entities | Core concepts |\n|---|---|---|---|\n"
                 "| 1 | 1, 2, 99 | twins | Twin seeding |\n"
                 "| 2 | 2, 3 | precipitates | Precipitate pinning |")
        backend = ScriptedBackend(rules=[ScriptRule(contains=("Categorize",), reply=reply)])
        pool = make_pool({1: (1, 4), 2: (1, 4), 3: (2, 5)})

        with caplog.at_level(logging.WARNING):
            ideas = await categorizer_for(backend).categorize_chunk([(h, None) for h in pool], 2)

        assert [idea.member_hypotheses for idea in ideas] == [[1, 2], [3]]
        assert "hypothesis 99 is not in the chunk" in caplog.text
        assert "hypothesis 2 assigned twice" in caplog.text

    async def test_unparseable_chunk_yields_nothing(self, categorizer_for):
        backend = ScriptedBackend(rules=[ScriptRule(contains=(), reply="These all look related.")])
        categorizer = categorizer_for(backend)
        ideas = await categorizer.categorize_chunk([(h, None) for h in make_pool({1: (1, 4)})], 3)
        assert ideas == []
        assert categorizer.failed_chunks == [3]
        assert backend.call_count == 2


class TestMergeIdeas:

    async def test_halts_once_the_cap_is_exceeded(self, categorizer_for):
        pool = make_pool({n: (1, 4) for n in range(1, 61)})
        backend = ScriptedBackend(rules=[
            ScriptRule(contains=("Below are ideas found separately",), reply=merge_rows(1, 30)),
            ScriptRule(contains=("Continue the table from idea 31",), reply=merge_rows(31, 51)),
            ScriptRule(contains=("Continue the table",), reply=merge_rows(52, 60, marker=True)),
        ])
        categorizer = categorizer_for(backend, idea_cap=50)

        state = await categorizer.merge_ideas([singleton_ideas(60)], pool)

        assert backend.call_count == 2
        assert state.halted
        assert len(state.ideas) == 51
        assert [idea.idea_id for idea in state.ideas] == list(range(1, 52))
        assert state.dropped_hypotheses == list(range(52, 61))

    async def test_turn_budget(self, categorizer_for):
        pool = make_pool({n: (1, 4) for n in range(1, 9)})
        backend = ScriptedBackend(rules=[
            ScriptRule(contains=("Below are ideas found separately",), reply=merge_rows(1, 2)),
            ScriptRule(contains=("Continue the table from idea 3",), reply=merge_rows(3, 4)),
            ScriptRule(contains=("Continue the table",), reply=merge_rows(5, 8, marker=True)),
        ])
        categorizer = categorizer_for(backend, turn_budget=2)

        state = await categorizer.merge_ideas([singleton_ideas(8)], pool)

        assert backend.call_count == 2
        assert state.turn_budget_exhausted
        assert not state.halted
        assert len(state.ideas) == 4
        assert state.dropped_hypotheses == [5, 6, 7, 8]

    async def test_unknown_keys_are_ignored(self, categorizer_for, caplog):
        reply = ("| Idea | Merged ideas | Structural entities | Core concepts |\n|---|---|---|---|\n"
                 "| 1 | C1-1, C7-3 | twins | Twin seeding |\nEND OF IDEAS")
        backend = ScriptedBackend(rules=[ScriptRule(contains=("Below are ideas",), reply=reply)])
        pool = make_pool({1: (1, 4), 2: (1, 4)})

        with caplog.at_level(logging.WARNING):
            state = await categorizer_for(backend).merge_ideas([singleton_ideas(2)], pool)

        assert [idea.member_hypotheses for idea in state.ideas] == [[1]]
        assert state.dropped_hypotheses == [2]
        assert "unknown idea C7-3" in caplog.text

    async def test_needs_chunk_ideas(self, categorizer_for, scripted_backend):
        with pytest.raises(ValueError):
            await categorizer_for(scripted_backend).merge_ideas([[], []], [])


class TestCategorize:

    async def test_two_steps(self, categorizer_for, scripted_backend):
        pool = make_pool({1: (1, 4), 2: (1, 4), 3: (1, 5), 4: (1, 5), 5: (2, 4),
                          6: (3, 6), 7: (3, 6), 8: (3, 6)})
        state, per_chunk = await categorizer_for(scripted_backend, chunks=3).categorize(pool, {})

        assert [len(ideas) for ideas in per_chunk] == [2, 3, 1]
        assert [idea.member_hypotheses for idea in state.ideas] == [[1, 2], [3, 4], [5], [6, 7, 8]]
        assert [idea.source_pair_signature for idea in state.ideas] == [
            {(1, 4)}, {(1, 5)}, {(2, 4)}, {(3, 6)}]
        assert not state.halted
        assert state.dropped_hypotheses == []
        merge_prompt = scripted_backend.ledger[-1][1].user_prompt
        assert "C2-1 | hypotheses 4 | paper pairs (1, 5) |" in merge_prompt

    async def test_every_chunk_failing(self, categorizer_for):
        backend = ScriptedBackend(rules=[ScriptRule(contains=(), reply="No table today.")])
        categorizer = categorizer_for(backend, chunks=3)
        pool = make_pool({n: (1, 4) for n in range(1, 7)})

        state, per_chunk = await categorizer.categorize(pool, {})

        assert per_chunk == [[], [], []]
        assert state.ideas == []
        assert state.dropped_hypotheses == [1, 2, 3, 4, 5, 6]
        assert sorted(categorizer.failed_chunks) == [1, 2, 3]

    def test_positive_settings(self, categorizer_for, scripted_backend):
        with pytest.raises(ValueError):
            categorizer_for(scripted_backend, idea_cap=0)


def test_coverage_report():
    pool = make_pool({n: (1, 4) for n in range(1, 61)})
    state = CategorizationState(ideas=[Idea(1, list(range(1, 21))), Idea(2, list(range(21, 36)))])

    report = coverage_report(state, pool)

    assert report["pool_size"] == 60
    assert report["covered"] == 35
    assert report["dropped"] == 25
    assert report["loss_fraction"] == pytest.approx(25 / 60)
    assert report["dropped_hypotheses"] == list(range(36, 61))
    assert report["idea_sizes"] == {"1": 20, "2": 15}
    assert report["halted"] is False
