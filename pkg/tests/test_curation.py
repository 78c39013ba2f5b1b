"""Annotation parsing, consensus filtering, split assignment, and JSONL IO."""

import logging

import pytest

from sdag.backends import BackendConfig, build_client
from sdag.curation import (
    CurationConfig,
    assign_splits,
    consensus_merge,
    curate_dataset,
    parse_annotation_reply,
    read_records,
    render_annotation_prompt,
    write_records,
)
from sdag.errors import (
    InvalidWeight,
    NoConsensus,
    ParseFailure,
    SdagError,
    TransportError,
)
from sdag.subjects import QuestionRecord, Subject

M, P, C, B = Subject.MATH, Subject.PHYSICS, Subject.CHEMISTRY, Subject.BIOLOGY


def make_record(rid, question="what is 2+2?"):
    return QuestionRecord(
        id=rid, question=question, options=["1", "2", "3", "4"], gold="A"
    )


def annotator_client(script):
    return build_client(
        [BackendConfig(name="annotator", kind="mock", script=script, seed=0)]
    )


# -- prompt -----------------------------------------------------------------


def test_prompt_contains_question_and_taxonomy():
    text = render_annotation_prompt(make_record("q1", "Why is the sky blue?"))
    assert "Question: Why is the sky blue?" in text
    assert "Candidate keywords:" in text
    assert "Computer Science" in text
    assert "Keywords: <Math 0.6>, <Physics 0.3>, <Chemistry 0.1>" in text


def test_prompt_does_not_escape():
    text = render_annotation_prompt('has "quotes" & <brackets>')
    assert 'has "quotes" & <brackets>' in text


def test_prompt_rejects_empty_question():
    with pytest.raises(ValueError):
        render_annotation_prompt("")


# -- reply parsing ----------------------------------------------------------


def test_parse_format_example():
    weights = parse_annotation_reply("Keywords: <Math 0.6>, <Physics 0.3>, <Chemistry 0.1>")
    assert set(weights) == {M, P, C}
    assert weights[M] == pytest.approx(0.6, rel=1e-12)
    assert weights[P] == pytest.approx(0.3, rel=1e-12)
    assert weights[C] == pytest.approx(0.1, rel=1e-12)


def test_parse_duplicate_subject_keeps_last_and_renormalizes():
    assert parse_annotation_reply("<Math 0.5>, <Math 0.5>") == {M: 1.0}


def test_parse_no_groups_fails():
    with pytest.raises(ParseFailure):
        parse_annotation_reply("The answer is 42")


def test_parse_uses_tail_after_last_marker():
    reply = "<Law 1.0> draft. Keywords: <Math 0.5>, <Physics 0.5>"
    weights = parse_annotation_reply(reply)
    assert set(weights) == {M, P}
    assert weights[M] == pytest.approx(0.5)


def test_parse_skips_unknown_subject_names():
    weights = parse_annotation_reply("Keywords: <Math 0.3>, <Astrology 0.4>, <Physics 0.3>")
    assert set(weights) == {M, P}
    assert weights[M] == pytest.approx(0.5)


def test_parse_case_insensitive_names():
    weights = parse_annotation_reply("Keywords: <math 0.6>, <PHYSICS 0.4>")
    assert set(weights) == {M, P}


def test_parse_renormalizes_bad_sum():
    weights = parse_annotation_reply("Keywords: <Math 0.6>, <Physics 0.6>")
    assert weights[M] == pytest.approx(0.5)
    assert weights[P] == pytest.approx(0.5)


def test_parse_rejects_weight_above_one():
    with pytest.raises(InvalidWeight):
        parse_annotation_reply("Keywords: <Math 1.5>")


def test_parse_rejects_all_zero_weights():
    with pytest.raises(ParseFailure):
        parse_annotation_reply("Keywords: <Math 0>, <Physics 0.0>")


# -- consensus --------------------------------------------------------------


def test_consensus_identical_rounds():
    runs = [{M: 0.5, P: 0.5}] * 3
    assert consensus_merge(runs) == {M: 0.5, P: 0.5}


def test_consensus_intersection_and_mean():
    runs = [{M: 0.5, P: 0.5}, {M: 0.6, P: 0.2, B: 0.2}, {M: 0.7, P: 0.3}]
    merged = consensus_merge(runs)
    assert set(merged) == {M, P}
    # means: M 0.6, P 1/3; renormalized to 9/14 and 5/14
    assert merged[M] == pytest.approx(9.0 / 14.0, rel=1e-12)
    assert merged[P] == pytest.approx(5.0 / 14.0, rel=1e-12)


def test_consensus_requires_three_rounds():
    with pytest.raises(ValueError):
        consensus_merge([{M: 1.0}] * 2)


def test_consensus_disjoint_rounds_fails():
    with pytest.raises(NoConsensus):
        consensus_merge([{M: 1.0}, {P: 1.0}, {M: 1.0}])


def test_consensus_two_of_three_never_appears():
    import numpy as np

    rng = np.random.default_rng(7)
    subjects = list(Subject)
    for _ in range(50):
        runs = []
        for _ in range(3):
            picks = rng.choice(len(subjects), size=int(rng.integers(2, 6)), replace=False)
            raw = {subjects[i]: float(rng.uniform(0.1, 1.0)) for i in picks}
            total = sum(raw.values())
            runs.append({s: w / total for s, w in raw.items()})
        shared = set(runs[0]) & set(runs[1]) & set(runs[2])
        if not shared:
            with pytest.raises(NoConsensus):
                consensus_merge(runs)
            continue
        merged = consensus_merge(runs)
        assert set(merged) == shared
        for s in Subject:
            if any(s not in run for run in runs):
                assert s not in merged
        assert abs(sum(merged.values()) - 1.0) <= 1e-9


# -- curate_dataset ---------------------------------------------------------


def test_curate_retains_consistent_annotation():
    client = annotator_client(
        [{"reply": "Keywords: <Math 0.5>, <Physics 0.3>, <Biology 0.2>"}]
    )
    cfg = CurationConfig(seed=0, profiling_size=0)
    out = curate_dataset([make_record("q1")], client, cfg)
    assert len(out.records) == 1
    assert out.skipped == []
    rec = out.records[0]
    assert set(rec.subjects) == {M, P, B}
    assert rec.subjects[M] == pytest.approx(0.5, rel=1e-12)
    assert rec.split in ("train", "test", "profiling")
    # three annotation rounds for one question
    assert client.counter.total == 3


def test_curate_skips_single_subject():
    client = annotator_client([{"reply": "Keywords: <Math 1.0>"}])
    out = curate_dataset([make_record("q1")], client, CurationConfig(profiling_size=0))
    assert out.records == []
    assert out.skipped == [("q1", "single_subject")]


def test_curate_skips_unparseable():
    client = annotator_client([{"reply": "The answer is 42"}])
    out = curate_dataset([make_record("q1")], client, CurationConfig(profiling_size=0))
    assert out.records == []
    assert out.skipped == [("q1", "parse")]


def test_curate_skips_no_consensus():
    script = [
        {"match": {"metadata": {"field": "round", "equals": "1"}}, "reply": "Keywords: <Biology 0.6>, <Chemistry 0.4>"},
        {"reply": "Keywords: <Math 0.5>, <Physics 0.5>"},
    ]
    out = curate_dataset(
        [make_record("q1")], annotator_client(script), CurationConfig(profiling_size=0)
    )
    assert out.records == []
    assert out.skipped == [("q1", "no_consensus")]


class FlakyClient:
    """Wraps a real client; injects a transport failure for chosen ids."""

    def __init__(self, inner, fail_ids):
        self.inner = inner
        self.fail_ids = fail_ids

    def complete(self, req):
        if req.metadata.get("question_id") in self.fail_ids:
            raise TransportError("injected failure", attempts=3)
        return self.inner.complete(req)


def test_curate_skips_transport_failures():
    inner = annotator_client([{"reply": "Keywords: <Math 0.5>, <Physics 0.5>"}])
    client = FlakyClient(inner, {"q-fail"})
    out = curate_dataset(
        [make_record("q-fail"), make_record("q-ok")],
        client,
        CurationConfig(profiling_size=0),
    )
    assert [r.id for r in out.records] == ["q-ok"]
    assert out.skipped == [("q-fail", "transport")]


def test_curate_all_single_subject_keeps_nothing():
    client = annotator_client([{"reply": "Keywords: <History 1.0>"}])
    raw = [make_record(f"q{i:02d}") for i in range(10)]
    out = curate_dataset(raw, client, CurationConfig(profiling_size=0))
    assert out.records == []
    assert len(out.skipped) == 10
    assert out.stats["kept"] == 0
    assert out.stats["input"] == 10


def test_curate_truncation_warning(caplog):
    client = annotator_client([{"reply": "Keywords: <Math 0.5>, <Physics 0.5>"}])
    raw = [make_record(f"q{i:02d}") for i in range(5)]
    with caplog.at_level(logging.WARNING, logger="sdag.curation"):
        out = curate_dataset(raw, client, CurationConfig(profiling_size=200))
    assert any("truncated" in r.message for r in caplog.records)
    assert out.stats["splits"]["profiling"] == 5


def test_curate_is_deterministic(tmp_path):
    def run(path):
        client = annotator_client(
            [{"reply": "Keywords: <Math 0.5>, <Physics 0.3>, <Biology 0.2>"}]
        )
        raw = [make_record(f"q{i:02d}") for i in range(8)]
        out = curate_dataset(raw, client, CurationConfig(seed=4, profiling_size=2))
        write_records(out.records, path)
        return out

    a = run(tmp_path / "a.jsonl")
    b = run(tmp_path / "b.jsonl")
    assert [r.split for r in a.records] == [r.split for r in b.records]
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_curate_rejects_empty_and_duplicate_input():
    client = annotator_client([{"reply": "Keywords: <Math 0.5>, <Physics 0.5>"}])
    with pytest.raises(ValueError):
        curate_dataset([], client)
    with pytest.raises(ValueError):
        curate_dataset([make_record("dup"), make_record("dup")], client)


# -- split assignment -------------------------------------------------------


def annotated(rid):
    return QuestionRecord(
        id=rid, question="q", options=["a", "b"], gold="A", subjects={M: 0.6, P: 0.4}
    )


def test_assign_splits_default_sizes():
    records = [annotated(f"r{i:02d}") for i in range(10)]
    cfg = CurationConfig(seed=0, profiling_size=3, train_ratio=0.7)
    out = assign_splits(records, cfg)
    counts = {name: sum(1 for r in out if r.split == name) for name in ("train", "test", "profiling")}
    assert counts == {"profiling": 3, "train": 5, "test": 2}


def test_assign_splits_partition_is_disjoint_and_total():
    records = [annotated(f"r{i:02d}") for i in range(23)]
    out = assign_splits(records, CurationConfig(seed=1, profiling_size=5))
    assert sorted(r.id for r in out) == sorted(r.id for r in records)
    assert all(r.split in ("train", "test", "profiling") for r in out)


def test_assign_splits_profiling_from_test():
    records = [annotated(f"r{i:02d}") for i in range(10)]
    cfg = CurationConfig(seed=0, profiling_size=2, train_ratio=0.7, profiling_from_test=True)
    out = assign_splits(records, cfg)
    counts = {name: sum(1 for r in out if r.split == name) for name in ("train", "test", "profiling")}
    assert counts == {"train": 7, "profiling": 2, "test": 1}


def test_assign_splits_order_independent():
    records = [annotated(f"r{i:02d}") for i in range(12)]
    cfg = CurationConfig(seed=9, profiling_size=4)
    fwd = assign_splits(records, cfg)
    rev = assign_splits(list(reversed(records)), cfg)
    assert {r.id: r.split for r in fwd} == {r.id: r.split for r in rev}


# -- JSONL ------------------------------------------------------------------


def test_jsonl_round_trip(tmp_path):
    records = [
        annotated("r1"),
        QuestionRecord(id="r2", question="q2", options=["x", "y"], gold="B", split="test"),
    ]
    path = tmp_path / "data.jsonl"
    write_records(records, path)
    assert read_records(path) == records


def test_read_records_bad_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "r1"\n', encoding="utf-8")
    with pytest.raises(SdagError):
        read_records(path)


def test_read_records_missing_field(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "r1", "question": "q"}\n', encoding="utf-8")
    with pytest.raises(SdagError):
        read_records(path)
