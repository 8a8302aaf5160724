import pytest

from alignlab.clone import DEFAULT_MARKER
from alignlab.errors import DataError
from alignlab.knowledge import (RELATIONS, build_probes, docs_for_period,
                                generate_knowledge_set, load_knowledge,
                                render_probe, render_statement, save_knowledge)
from alignlab.textgen import GENERATOR_WORDS


def test_generation_is_deterministic():
    a = generate_knowledge_set(2, 4, (1, 4), seed=5)
    b = generate_knowledge_set(2, 4, (1, 4), seed=5)
    assert a == b


def test_shape_and_levels():
    trip = generate_knowledge_set(3, 2, (1, 4, 16), seed=0)
    assert len(trip) == 3 * 2 * 3
    for p in range(3):
        per = [t for t in trip if t.period == p]
        assert sorted(t.frequency for t in per) == [1, 1, 4, 4, 16, 16]


def test_subjects_unique_and_disjoint_from_corpus_words():
    trip = generate_knowledge_set(2, 6, (1, 4), seed=1)
    subs = [t.subject for t in trip]
    assert len(set(subs)) == len(subs)
    lower_generator = {w.lower() for w in GENERATOR_WORDS}
    for t in trip:
        assert t.subject.lower() not in lower_generator
        assert t.object.lower() not in lower_generator
        assert t.relation in RELATIONS


def test_docs_for_period_repeats_by_frequency():
    trip = generate_knowledge_set(2, 2, (1, 4), seed=2)
    docs = docs_for_period(trip, 0)
    per0 = [t for t in trip if t.period == 0]
    assert len(docs) == sum(t.frequency for t in per0)
    for t in per0:
        stmt = render_statement(t.subject, t.relation, t.object)
        assert docs.count(stmt) >= t.frequency


def test_statement_form():
    s = render_statement("Vok", "origin", "Zemra")
    assert s == f"Vok {RELATIONS['origin']} Zemra ."
    with pytest.raises(DataError):
        render_statement("Vok", "nope", "Zemra")


def test_probes_have_same_relation_distractors():
    trip = generate_knowledge_set(2, 8, (1, 4), seed=3)
    probes = build_probes(trip, seed=9)
    assert len(probes) == len(trip)
    by_rel_objs = {}
    for t in trip:
        by_rel_objs.setdefault(t.relation, set()).add(t.object)
    for p, t in zip(probes, trip):
        assert (p.subject, p.relation, p.true_object) == (t.subject, t.relation, t.object)
        assert len(p.distractors) == 3
        assert p.true_object not in p.distractors
        assert len(set(p.distractors)) == 3
        for d in p.distractors:
            assert d in by_rel_objs[p.relation]


def test_render_probe_true_statement_first():
    trip = generate_knowledge_set(1, 8, (1,), seed=4)
    probes = build_probes(trip, seed=1)
    stmts = render_probe(probes[0])
    assert len(stmts) == 4
    assert stmts[0] == render_statement(probes[0].subject, probes[0].relation,
                                        probes[0].true_object)
    cloned = render_probe(probes[0], clone=True, marker=DEFAULT_MARKER)
    assert all(w.endswith(DEFAULT_MARKER) for w in cloned[0].split())
    with pytest.raises(DataError):
        render_probe(probes[0], clone=True, marker=None)


def test_knowledge_file_roundtrip(tmp_path):
    trip = generate_knowledge_set(2, 3, (1, 16), seed=6)
    p = tmp_path / "k.tsv"
    save_knowledge(p, trip)
    assert load_knowledge(p) == trip


def test_too_few_triplets_for_distractors_raises():
    trip = generate_knowledge_set(1, 1, (1,), seed=7)
    with pytest.raises(DataError):
        build_probes(trip, seed=0)
