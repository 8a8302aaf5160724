"""Synthetic English-like corpus generator.

Produces the base-language pretraining text for desk-scale runs: template
sentences over fixed word lists with Zipf-weighted sampling, so the corpus
has a heavy-tailed unigram distribution, stable local grammar, and a
vocabulary small enough to train against on a CPU. Punctuation is always
emitted as a detached word and lines are single-spaced, which keeps the
tokenizer round trip exact.

The noun inventory is grouped into semantic categories; the category map is
exported for the synthetic sentence-pair classification task.
"""

from __future__ import annotations

import numpy as np

from .seeding import rng

NOUN_CATEGORIES: dict[str, tuple[str, ...]] = {
    "instrument": (
        "piano", "guitar", "violin", "drum", "flute", "trumpet", "cello",
        "harp", "banjo", "organ", "fiddle", "horn", "oboe", "tuba",
    ),
    "animal": (
        "dog", "cat", "horse", "sheep", "goat", "rabbit", "fox", "crow",
        "owl", "wolf", "mouse", "pig", "duck", "heron", "badger", "trout",
    ),
    "food": (
        "bread", "cheese", "apple", "soup", "cake", "butter", "honey",
        "plum", "stew", "pear", "grain", "pie", "milk", "barley",
    ),
    "plant": (
        "oak", "willow", "fern", "rose", "moss", "birch", "ivy", "cedar",
        "clover", "reed",
    ),
    "vehicle": (
        "cart", "wagon", "boat", "sled", "canoe", "carriage", "barge",
        "bicycle", "raft", "tram", "ferry", "coach",
    ),
    "tool": (
        "hammer", "saw", "ladder", "rope", "shovel", "needle", "axe",
        "chisel", "rake", "anvil", "lantern", "loom",
    ),
    "garment": (
        "coat", "hat", "scarf", "boot", "glove", "cloak", "apron",
        "mitten", "vest", "sandal",
    ),
    "building": (
        "house", "barn", "mill", "tower", "bridge", "chapel", "stable",
        "cottage", "granary", "forge",
    ),
    "weather": (
        "rain", "snow", "wind", "fog", "storm", "frost", "thunder", "hail",
    ),
    "profession": (
        "farmer", "baker", "smith", "weaver", "miller", "sailor", "mason",
        "potter", "shepherd", "carpenter", "fisher", "tailor",
    ),
}

NOUNS: tuple[str, ...] = tuple(w for ws in NOUN_CATEGORIES.values() for w in ws)

VERBS_T: tuple[str, ...] = (
    "carried", "found", "sold", "bought", "built", "mended", "painted",
    "watched", "played", "moved", "cleaned", "borrowed", "dropped",
    "lifted", "traded", "counted", "gathered", "covered", "filled",
    "opened", "closed", "washed", "broke", "shared", "hid", "held",
    "made", "kept", "brought", "showed", "crafted", "weighed", "stacked",
    "packed", "hauled", "polished", "repaired", "admired", "measured",
    "followed",
)

VERBS_I: tuple[str, ...] = (
    "slept", "waited", "arrived", "vanished", "rested", "stumbled",
    "wandered", "hurried", "paused", "trembled", "whistled", "nodded",
    "shouted", "laughed", "sighed", "listened", "turned", "stood",
    "leaned", "knelt", "drifted", "settled",
)

ADJECTIVES: tuple[str, ...] = (
    "old", "new", "small", "large", "quiet", "heavy", "light", "bright",
    "dark", "clean", "dusty", "broken", "narrow", "wide", "warm", "cold",
    "green", "red", "blue", "grey", "plain", "fine", "rough", "smooth",
    "crooked", "steep", "hollow", "damp", "pale", "sturdy", "worn",
    "gentle", "sharp", "round", "tall", "short", "thin", "thick",
)

ADVERBS: tuple[str, ...] = (
    "slowly", "quickly", "quietly", "carefully", "often", "rarely",
    "early", "late", "well", "badly", "again", "twice", "soon",
    "together", "alone", "nearby", "upstairs", "outside", "gladly",
    "barely",
)

NAMES: tuple[str, ...] = (
    "Alden", "Bram", "Carys", "Doran", "Edda", "Fenn", "Greta", "Hale",
    "Ines", "Jorun", "Kade", "Lise", "Maren", "Nils", "Orla", "Pell",
    "Quinn", "Rona", "Sten", "Tilda", "Ulf", "Vera", "Wren", "Ynes",
    "Zora", "Abel", "Brit", "Cole", "Dagny", "Eyvin",
)

PLACES: tuple[str, ...] = (
    "Norwick", "Ashdale", "Ellmere", "Torvale", "Grenholm", "Westmoor",
    "Dunfeld", "Larkhall", "Stonewick", "Fernlea", "Harwick", "Oldbrook",
)

DETERMINERS: tuple[str, ...] = ("the", "a", "this", "that", "every", "some", "each")
PREPOSITIONS: tuple[str, ...] = (
    "near", "under", "behind", "beside", "inside", "around", "toward",
    "against", "across", "along", "above", "past",
)

RARE_SUFFIXES: tuple[str, ...] = ("hood", "ware", "craft", "work", "ship", "most")

# Every surface word the generator can emit, used to keep knowledge-entity
# pools disjoint from the natural corpus vocabulary.
GENERATOR_WORDS: frozenset[str] = frozenset(
    NOUNS + VERBS_T + VERBS_I + ADJECTIVES + ADVERBS + NAMES + PLACES
    + DETERMINERS + PREPOSITIONS
    + ("and", "while", "then", "of", "with", "in", "on", "was", "were",
       "not", "very", "by", "at", "from", "to", ".", ",")
    + tuple(n + s for n in NOUNS for s in RARE_SUFFIXES)
)


def _zipf_weights(n: int) -> np.ndarray:
    w = 1.0 / (np.arange(n) + 2.0)
    return w / w.sum()


class _Sampler:
    """Zipf-weighted word pickers over the fixed lists."""

    def __init__(self, gen: np.random.Generator, rare_word_rate: float):
        self.gen = gen
        self.rare_word_rate = rare_word_rate
        self._weights = {
            name: _zipf_weights(len(words))
            for name, words in {
                "noun": NOUNS, "vt": VERBS_T, "vi": VERBS_I,
                "adj": ADJECTIVES, "adv": ADVERBS, "name": NAMES,
                "place": PLACES, "det": DETERMINERS, "prep": PREPOSITIONS,
            }.items()
        }
        self._lists = {
            "noun": NOUNS, "vt": VERBS_T, "vi": VERBS_I, "adj": ADJECTIVES,
            "adv": ADVERBS, "name": NAMES, "place": PLACES,
            "det": DETERMINERS, "prep": PREPOSITIONS,
        }

    def pick(self, pos: str) -> str:
        words = self._lists[pos]
        w = words[self.gen.choice(len(words), p=self._weights[pos])]
        if pos == "noun" and self.rare_word_rate > 0.0:
            if self.gen.random() < self.rare_word_rate:
                w = w + RARE_SUFFIXES[int(self.gen.integers(len(RARE_SUFFIXES)))]
        return w


def _sentence(s: _Sampler) -> str:
    g = s.gen
    form = int(g.integers(10))
    if form == 0:
        return f"{s.pick('det')} {s.pick('adj')} {s.pick('noun')} {s.pick('vi')} {s.pick('adv')} ."
    if form == 1:
        return f"{s.pick('name')} {s.pick('vt')} {s.pick('det')} {s.pick('noun')} ."
    if form == 2:
        return f"{s.pick('det')} {s.pick('noun')} was {s.pick('adj')} ."
    if form == 3:
        return (f"{s.pick('name')} {s.pick('vt')} {s.pick('det')} {s.pick('adj')} "
                f"{s.pick('noun')} {s.pick('prep')} {s.pick('det')} {s.pick('noun')} .")
    if form == 4:
        return f"{s.pick('det')} {s.pick('noun')} {s.pick('vi')} {s.pick('prep')} {s.pick('det')} {s.pick('noun')} ."
    if form == 5:
        return f"{s.pick('name')} and {s.pick('name')} {s.pick('vt')} {s.pick('det')} {s.pick('noun')} {s.pick('adv')} ."
    if form == 6:
        return f"{s.pick('det')} {s.pick('noun')} of {s.pick('place')} {s.pick('vi')} {s.pick('adv')} ."
    if form == 7:
        return f"in {s.pick('place')} {s.pick('det')} {s.pick('noun')} {s.pick('vi')} ."
    if form == 8:
        return (f"{s.pick('det')} {s.pick('noun')} {s.pick('vt')} "
                f"{s.pick('det')} {s.pick('noun')} and {s.pick('det')} {s.pick('noun')} .")
    return f"{s.pick('name')} {s.pick('vi')} while {s.pick('det')} {s.pick('noun')} {s.pick('vi')} ."


def generate_document(gen: np.random.Generator, rare_word_rate: float = 0.003) -> str:
    s = _Sampler(gen, rare_word_rate)
    n = int(gen.integers(2, 6))
    return " ".join(_sentence(s) for _ in range(n))


def generate_corpus(n_tokens: int, seed: int, rare_word_rate: float = 0.003) -> list[str]:
    """Generate documents until w word-token count >= n_tokens.

    Token counts here are whitespace words; the trained tokenizer keeps
    common words whole, so this matches the scheduled budget closely.
    """
    gen = rng(seed, "textgen")
    docs: list[str] = []
    total = 0
    while total < n_tokens:
        doc = generate_document(gen, rare_word_rate)
        docs.append(doc)
        total += doc.count(" ") + 1
    return docs


def write_corpus(path, docs: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in docs:
            f.write(d + "\n")


def read_corpus(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]
