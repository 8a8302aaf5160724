"""Synthetic factual knowledge: triplets, corpus docs, and probes.

Facts are (subject, relation, object) triplets over invented entity names
that never occur in the natural corpus, so a model can only learn them from
the injected statements. Each triplet belongs to one injection period and
carries a frequency: how many times its statement document appears in that
period's stream. Probes test a fact by ranking the true statement against
distractor statements whose object is swapped for another entity seen with
the same relation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .clone import clone_text
from .errors import DataError
from .seeding import rng
from .textgen import GENERATOR_WORDS

RELATIONS: dict[str, str] = {
    "origin": "comes from",
    "ally": "works with",
    "home": "lives near",
    "trade": "trades with",
    "craft": "cares for",
}

_CONSONANTS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
_VOWELS = ("a", "e", "i", "o", "u")


@dataclass(frozen=True)
class KnowledgeTriplet:
    period: int
    subject: str
    relation: str
    object: str
    frequency: int


@dataclass(frozen=True)
class ProbeItem:
    subject: str
    relation: str
    true_object: str
    distractors: tuple[str, ...]


def _entity_names(count: int, seed: int, label: str) -> list[str]:
    """Invented proper names, unique and absent from the generator lists.

    All names are exactly three syllables. Probe candidates differ only in
    the object entity and are compared by total statement log-probability,
    so equal name length keeps that comparison free of length bias even
    when names are spelled out as character pieces.
    """
    gen = rng(seed, "entities", label)
    names: list[str] = []
    seen: set[str] = set(w.lower() for w in GENERATOR_WORDS)
    while len(names) < count:
        syls = []
        for _ in range(3):
            syls.append(_CONSONANTS[int(gen.integers(len(_CONSONANTS)))]
                        + _VOWELS[int(gen.integers(len(_VOWELS)))])
        name = "".join(syls).capitalize()
        if name.lower() in seen:
            continue
        seen.add(name.lower())
        names.append(name)
    return names


def generate_knowledge_set(
    periods: int,
    n_per_level: int,
    levels: tuple[int, ...],
    seed: int,
    objects_per_relation: int = 12,
) -> list[KnowledgeTriplet]:
    """Fresh triplets for every period.

    Each period contributes n_per_level triplets at each frequency level.
    Subjects are globally unique; objects are drawn from a per-relation pool
    so every fact has same-relation alternatives to act as distractors.
    """
    if periods < 1 or n_per_level < 1 or not levels:
        raise DataError("knowledge set needs at least one period, level, and triplet")
    total = periods * len(levels) * n_per_level
    subjects = _entity_names(total, seed, "subject")
    rel_names = sorted(RELATIONS)
    # Use few enough relations that each accumulates at least 4 distinct
    # objects; probes need 3 same-relation distractors per fact.
    rel_names = rel_names[: min(len(rel_names), max(1, total // 4))]
    pools = {
        r: _entity_names(objects_per_relation, seed, f"object-{r}") for r in rel_names
    }
    rel_counts = dict.fromkeys(rel_names, 0)
    triplets: list[KnowledgeTriplet] = []
    si = 0
    for period in range(periods):
        for level in levels:
            for _ in range(n_per_level):
                r = rel_names[si % len(rel_names)]
                obj = pools[r][rel_counts[r] % objects_per_relation]
                rel_counts[r] += 1
                triplets.append(KnowledgeTriplet(period, subjects[si], r, obj, level))
                si += 1
    return triplets


def render_statement(subject: str, relation: str, obj: str) -> str:
    if relation not in RELATIONS:
        raise DataError(f"unknown relation {relation!r}")
    return f"{subject} {RELATIONS[relation]} {obj} ."


def docs_for_period(triplets: list[KnowledgeTriplet], period: int) -> list[str]:
    """Statement documents for one period, frequency-many copies each."""
    docs = []
    for t in triplets:
        if t.period == period:
            docs.extend([render_statement(t.subject, t.relation, t.object)] * t.frequency)
    return docs


def all_statement_docs(triplets: list[KnowledgeTriplet]) -> list[str]:
    return [render_statement(t.subject, t.relation, t.object) for t in triplets]


def build_probes(triplets: list[KnowledgeTriplet], seed: int, n_distractors: int = 3) -> list[ProbeItem]:
    """One probe per triplet with same-relation object distractors."""
    by_rel: dict[str, list[str]] = {}
    for t in triplets:
        by_rel.setdefault(t.relation, [])
        if t.object not in by_rel[t.relation]:
            by_rel[t.relation].append(t.object)
    probes = []
    for i, t in enumerate(triplets):
        cands = [o for o in sorted(by_rel[t.relation]) if o != t.object]
        if len(cands) < n_distractors:
            raise DataError(
                f"relation {t.relation!r} has {len(cands)} alternative objects, "
                f"need {n_distractors}"
            )
        gen = rng(seed, "probe", i)
        picks = gen.choice(len(cands), size=n_distractors, replace=False)
        probes.append(ProbeItem(t.subject, t.relation, t.object,
                                tuple(cands[int(j)] for j in picks)))
    return probes


def render_probe(item: ProbeItem, clone: bool = False, marker: str | None = None) -> list[str]:
    """Candidate statements, true one first."""
    stmts = [render_statement(item.subject, item.relation, item.true_object)]
    for d in item.distractors:
        stmts.append(render_statement(item.subject, item.relation, d))
    if clone:
        if not marker:
            raise DataError("clone probes need the clone marker")
        stmts = [clone_text(s, marker) for s in stmts]
    return stmts


def save_knowledge(path, triplets: list[KnowledgeTriplet]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in triplets:
            f.write(f"{t.period}\t{t.subject}\t{t.relation}\t{t.object}\t{t.frequency}\n")


def load_knowledge(path) -> list[KnowledgeTriplet]:
    out = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DataError(f"{path}:{ln}: expected 5 tab-separated fields")
            p, s, r, o, freq = parts
            try:
                out.append(KnowledgeTriplet(int(p), s, r, o, int(freq)))
            except ValueError as e:
                raise DataError(f"{path}:{ln}: {e}") from e
    if not out:
        raise DataError(f"{path}: empty knowledge file")
    return out
