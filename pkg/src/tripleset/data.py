"""Corpora of sentences annotated with relational triples.

Two on-disk formats are read:

``native-jsonl``
    one JSON object per line::

        {"text": "...", "tokens": [...],
         "triples": [{"relation": "r", "subj": [s, e], "obj": [s, e]}]}

    Spans are inclusive token indices. ``tokens`` may be omitted, in which case
    the text is split on whitespace.

``copyre-json``
    the benchmark layout with entity mention strings instead of spans::

        {"sentText": "...", "relationMentions": [{"em1Text": "...", "em2Text": "...", "label": "r"}]}

    either one object per line or a single JSON list. Mentions are grounded to
    token spans by :func:`locate_entities`.
"""
from __future__ import annotations

import enum
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matching_loss import GoldTriple, GoldTripleSet
from .model import CLS, PAD, SEP, UNK

log = logging.getLogger(__name__)

NULL_RELATION = "<none>"
SPECIAL_TOKENS = {"[PAD]": PAD, "[UNK]": UNK, "[CLS]": CLS, "[SEP]": SEP}
FORMATS = ("native-jsonl", "copyre-json")

NORMAL, EPO, SEO = "Normal", "EPO", "SEO"


class MatchingMode(enum.Enum):
    PARTIAL = "partial"
    EXACT = "exact"

    @classmethod
    def parse(cls, value) -> MatchingMode:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown matching mode {value!r}; expected 'partial' or 'exact'") from None


class CorpusFormatError(ValueError):
    pass


class UnknownRelationError(ValueError):
    pass


# ---------------------------------------------------------------- inventories

class Vocabulary:
    def __init__(self, tokens=()):
        self.itos: list[str] = list(SPECIAL_TOKENS)
        self.stoi: dict[str, int] = dict(SPECIAL_TOKENS)
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None:
            idx = self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return idx

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    @classmethod
    def build(cls, sentences_tokens) -> Vocabulary:
        counts = Counter(t for toks in sentences_tokens for t in toks)
        return cls(sorted(counts, key=lambda t: (-counts[t], t)))

    def to_json(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_json(cls, items) -> Vocabulary:
        if list(items[:len(SPECIAL_TOKENS)]) != list(SPECIAL_TOKENS):
            raise CorpusFormatError("vocabulary file does not start with the reserved tokens")
        return cls(items[len(SPECIAL_TOKENS):])


class RelationInventory:
    """Relation names mapped to dense indices; the no-triple class is always last."""

    def __init__(self, names):
        names = [n for n in names if n != NULL_RELATION]
        if len(set(names)) != len(names):
            raise ValueError("duplicate relation names")
        self.names: list[str] = names + [NULL_RELATION]
        self._index = {n: i for i, n in enumerate(self.names)}

    @property
    def null_index(self) -> int:
        return len(self.names) - 1

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, RelationInventory) and self.names == other.names

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownRelationError(f"unknown relation {name!r}") from None

    def to_json(self) -> list[str]:
        return list(self.names)

    @classmethod
    def from_json(cls, items) -> RelationInventory:
        return cls(items)


# ---------------------------------------------------------------- sentences

@dataclass(frozen=True)
class Triple:
    relation: str
    subj: tuple[int, int]
    obj: tuple[int, int]

    def head_only(self) -> Triple:
        return Triple(self.relation, (self.subj[1], self.subj[1]), (self.obj[1], self.obj[1]))

    def to_json(self) -> dict:
        return {"relation": self.relation, "subj": list(self.subj), "obj": list(self.obj)}


@dataclass
class Sentence:
    text: str
    tokens: list[str]
    triples: list[Triple]
    token_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.tokens)
        for tr in self.triples:
            for s, e in (tr.subj, tr.obj):
                if not 0 <= s <= e < n:
                    raise ValueError(f"span ({s}, {e}) outside a {n}-token sentence")

    @property
    def overlap(self) -> frozenset[str]:
        return classify_overlap(self)

    def gold_set(self, relations: RelationInventory, m: int, offset: int = 1) -> GoldTripleSet:
        rows = [(relations.index(t.relation), t.subj[0], t.subj[1], t.obj[0], t.obj[1])
                for t in self.triples]
        return pad_gold_set(rows, m, relations.null_index, offset=offset, label=self.text)

    def to_json(self) -> dict:
        return {"text": self.text, "tokens": list(self.tokens),
                "triples": [t.to_json() for t in self.triples]}


@dataclass
class Corpus:
    sentences: list[Sentence]
    vocab: Vocabulary
    relations: RelationInventory
    split: str = "train"
    mode: MatchingMode = MatchingMode.EXACT
    dropped: int = 0
    manifest: list[dict] | None = None

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    def subset(self, indices, split: str | None = None) -> Corpus:
        return Corpus([self.sentences[i] for i in indices], self.vocab, self.relations,
                      split or self.split, self.mode)

    def with_mode(self, mode) -> Corpus:
        """Re-annotate spans for ``mode``; partial keeps only each entity's last token."""
        mode = MatchingMode.parse(mode)
        sents = self.sentences
        if mode is MatchingMode.PARTIAL:
            sents = [Sentence(s.text, s.tokens, [t.head_only() for t in s.triples], s.token_ids)
                     for s in sents]
        return Corpus(sents, self.vocab, self.relations, self.split, mode, self.dropped, self.manifest)


# ---------------------------------------------------------------- gold sets / overlap

def pad_gold_set(triples, m: int, null_relation: int, offset: int = 0, label: str | None = None) -> GoldTripleSet:
    """Real triples first, then ``m - n`` no-triple entries.

    ``triples`` holds (relation, s_start, s_end, o_start, o_end) tuples or
    GoldTriple objects; ``offset`` shifts span indices (1 skips the start marker).
    """
    rows = [g.fields() if isinstance(g, GoldTriple) else tuple(g) for g in triples]
    if len(rows) > m:
        where = f" in sentence {label!r}" if label else ""
        raise ValueError(f"{len(rows)} gold triples{where} exceed the {m} prediction slots")
    real = [GoldTriple(int(r), s0 + offset, s1 + offset, o0 + offset, o1 + offset)
            for r, s0, s1, o0, o1 in rows]
    pads = [GoldTriple(null_relation)] * (m - len(real))
    return GoldTripleSet(tuple(real + pads), len(real), null_relation)


def classify_overlap(sentence) -> frozenset[str]:
    """Normal, or any of EPO / SEO.

    Two triples overlap on an entity pair when their ordered (subject, object)
    spans are equal; they overlap on a single entity when they share any entity
    span without that. Reversed pairs therefore count as single-entity overlap.
    """
    triples = sentence.triples if hasattr(sentence, "triples") else sentence
    labels = set()
    for i in range(len(triples)):
        a = triples[i]
        for b in triples[i + 1:]:
            if (a.subj, a.obj) == (b.subj, b.obj):
                labels.add(EPO)
            elif {a.subj, a.obj} & {b.subj, b.obj}:
                labels.add(SEO)
    return frozenset(labels) if labels else frozenset({NORMAL})


# ---------------------------------------------------------------- entity grounding

def _find_all(tokens, needle, fold: bool) -> list[int]:
    if fold:
        tokens = [t.lower() for t in tokens]
        needle = [t.lower() for t in needle]
    k = len(needle)
    return [i for i in range(len(tokens) - k + 1) if tokens[i:i + k] == needle]


def locate_entities(tokens: list[str], mentions) -> dict[str, tuple[int, int]]:
    """Ground mention strings to inclusive token spans.

    Longer mentions are placed first; each takes its first occurrence that does
    not overlap an already placed mention (falling back to the first occurrence
    at all). Matching is case-sensitive, then case-insensitive. Mentions that
    cannot be found are left out of the result.
    """
    unique = list(dict.fromkeys(mentions))
    order = sorted(unique, key=lambda s: (-len(s.split()), unique.index(s)))
    taken = np.zeros(len(tokens), dtype=bool)
    spans: dict[str, tuple[int, int]] = {}
    for mention in order:
        needle = mention.split()
        if not needle:
            continue
        hits = _find_all(tokens, needle, fold=False) or _find_all(tokens, needle, fold=True)
        if not hits:
            continue
        k = len(needle)
        free = [i for i in hits if not taken[i:i + k].any()]
        start = (free or hits)[0]
        spans[mention] = (start, start + k - 1)
        taken[start:start + k] = True
    return spans


# ---------------------------------------------------------------- loading

def _read_records(path: Path, fmt: str):
    text = path.read_text(encoding="utf-8")
    if fmt == "copyre-json" and text.lstrip().startswith("["):
        try:
            items = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        for i, obj in enumerate(items, start=1):
            yield i, obj
        return
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: {exc.msg}") from exc


def _native_sentence(obj, where: str) -> Sentence | None:
    try:
        text = obj.get("text", "")
        tokens = obj.get("tokens") or text.split()
        if not text:
            text = " ".join(tokens)
        triples = [Triple(t["relation"], tuple(t["subj"]), tuple(t["obj"])) for t in obj.get("triples", [])]
        return Sentence(text, list(tokens), triples)
    except (KeyError, TypeError, AttributeError) as exc:
        raise CorpusFormatError(f"{where}: malformed record ({exc})") from exc
    except ValueError as exc:
        raise CorpusFormatError(f"{where}: {exc}") from exc


def _copyre_sentence(obj, where: str) -> Sentence | None:
    try:
        text = obj["sentText"]
        mentions = obj.get("relationMentions", [])
        pairs = [(rm["em1Text"], rm["label"], rm["em2Text"]) for rm in mentions]
    except (KeyError, TypeError) as exc:
        raise CorpusFormatError(f"{where}: malformed record ({exc})") from exc
    tokens = text.split()
    spans = locate_entities(tokens, [e for s, _, o in pairs for e in (s, o)])
    triples = []
    for s, rel, o in pairs:
        if s not in spans or o not in spans:
            return None
        triples.append(Triple(rel, spans[s], spans[o]))
    return Sentence(text, tokens, list(dict.fromkeys(triples)))


def load_corpus(path, fmt: str = "native-jsonl", mode=MatchingMode.EXACT,
                relations: RelationInventory | None = None, vocab: Vocabulary | None = None,
                m: int | None = None, split: str = "train") -> Corpus:
    """Read a corpus file.

    Sentences whose entities cannot be grounded, or with more than ``m``
    triples, are dropped and counted in ``Corpus.dropped``. Given an existing
    ``relations`` inventory, unseen relation names raise
    :class:`UnknownRelationError`; given ``vocab``, unseen tokens map to UNK.
    """
    path = Path(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown corpus format {fmt!r}; expected one of {FORMATS}")
    mode = MatchingMode.parse(mode)
    parse = _native_sentence if fmt == "native-jsonl" else _copyre_sentence
    sentences: list[Sentence] = []
    unlocated = too_many = 0
    for lineno, obj in _read_records(path, fmt):
        sent = parse(obj, f"{path}:{lineno}")
        if sent is None:
            unlocated += 1
            continue
        if relations is not None:
            for t in sent.triples:
                try:
                    relations.index(t.relation)
                except UnknownRelationError as exc:
                    raise UnknownRelationError(f"{path}:{lineno}: {exc}") from None
        if m is not None and len(sent.triples) > m:
            too_many += 1
            continue
        sentences.append(sent)
    if unlocated:
        log.warning("%s: dropped %d sentences with entities not found in the text", path, unlocated)
    if too_many:
        log.warning("%s: dropped %d sentences with more than m=%d triples", path, too_many, m)
    return _finish(sentences, mode, relations, vocab, split, unlocated + too_many)


def _finish(sentences, mode, relations, vocab, split, dropped=0, manifest=None) -> Corpus:
    if relations is None:
        relations = RelationInventory(sorted({t.relation for s in sentences for t in s.triples}))
    if vocab is None:
        vocab = Vocabulary.build(s.tokens for s in sentences)
    for s in sentences:
        s.token_ids = vocab.encode(s.tokens)
    corpus = Corpus(sentences, vocab, relations, split, MatchingMode.EXACT, dropped, manifest)
    return corpus.with_mode(mode) if mode is MatchingMode.PARTIAL else corpus


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in corpus.sentences:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def save_inventories(corpus: Corpus, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "vocab.json").write_text(json.dumps(corpus.vocab.to_json(), ensure_ascii=False))
    (directory / "relations.json").write_text(json.dumps(corpus.relations.to_json(), ensure_ascii=False))


def load_inventories(directory) -> tuple[Vocabulary, RelationInventory]:
    directory = Path(directory)
    vocab = Vocabulary.from_json(json.loads((directory / "vocab.json").read_text()))
    relations = RelationInventory.from_json(json.loads((directory / "relations.json").read_text()))
    return vocab, relations


# ---------------------------------------------------------------- synthetic data

_RELATIONS = [
    ("located_in", "is located in"), ("leader_name", "is led by"), ("capital_of", "is the capital of"),
    ("founded_by", "was founded by"), ("part_of", "is part of"), ("works_for", "works for"),
    ("owns", "owns"), ("borders", "borders"), ("born_in", "was born in"), ("supplies", "supplies"),
    ("member_of", "is a member of"), ("named_after", "is named after"),
]
_OPENERS = [[], [], ["Reports", "say", "that"], ["In", "1998", ","], ["Officially", ","], ["We", "learned", "that"]]
_ONSETS = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "sk"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "n", "r", "s", "l", "th", "m"]

PATTERNS = (NORMAL, EPO, SEO, "EPO+SEO")


def _word_pool(rng: np.random.Generator, n: int) -> list[str]:
    words: list[str] = []
    seen = set()
    while len(words) < n:
        syll = rng.integers(2, 4)
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS) for _ in range(syll))
        w = w.capitalize()
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _pattern_triples(rng, pattern: str, n: int, n_rel: int, fresh):
    """Entity-index triples (subject, relation, object) realising ``pattern``."""
    out = []
    if pattern in (EPO, "EPO+SEO"):
        a, b = fresh(), fresh()
        r1, r2 = rng.choice(n_rel, size=2, replace=False)
        out += [(a, int(r1), b), (a, int(r2), b)]
        if pattern == "EPO+SEO":
            c = fresh()
            out.append((a, int(rng.integers(n_rel)), c) if rng.random() < 0.5 else (c, int(rng.integers(n_rel)), b))
    elif pattern == SEO:
        a, b, c = fresh(), fresh(), fresh()
        shape = int(rng.integers(3))
        r1, r2 = (int(x) for x in rng.integers(n_rel, size=2))
        second = [(a, r2, c), (c, r2, b), (b, r2, c)][shape]
        out += [(a, r1, b), second]
    while len(out) < n:
        out.append((fresh(), int(rng.integers(n_rel)), fresh()))
    return out


def generate_synthetic(seed: int, n_sentences: int, relation_count: int = 4, max_triples: int = 5,
                       entity_pool: int = 60, split: str = "train") -> Corpus:
    """Template sentences with known triples.

    Sentence k carries ``k % max_triples + 1`` triples; sentences with two or
    more triples cycle through Normal, EPO, SEO and EPO+SEO overlap patterns
    (EPO+SEO needs three triples). Every entity token is unique to its entity,
    so each mention is grounded at its first occurrence. The returned corpus
    carries a ``manifest`` listing each sentence's requested pattern and gold
    triples as strings.
    """
    if min(n_sentences, relation_count, max_triples) < 1:
        raise ValueError("n_sentences, relation_count and max_triples must be positive")
    rng = np.random.default_rng(seed)
    rel_defs = [_RELATIONS[i] if i < len(_RELATIONS) else (f"rel_{i}", f"relates{i} to")
                for i in range(relation_count)]
    words = _word_pool(rng, 2 * entity_pool)
    entities = []
    for k in range(entity_pool):
        entities.append(words[2 * k] if rng.random() < 0.6 else f"{words[2 * k]} {words[2 * k + 1]}")

    sentences, manifest = [], []
    per_count = Counter()
    for k in range(n_sentences):
        n = k % max_triples + 1
        if n == 1 or relation_count < 2:
            pattern = NORMAL
        else:
            choices = [p for p in PATTERNS if p != "EPO+SEO" or n >= 3]
            pattern = choices[per_count[n] % len(choices)]
        per_count[n] += 1
        pool = list(rng.permutation(entity_pool))
        fresh = lambda: int(pool.pop())  # noqa: E731
        trip_ids = _pattern_triples(rng, pattern, n, relation_count, fresh)
        order = rng.permutation(len(trip_ids))
        trip_ids = [trip_ids[i] for i in order]

        tokens = list(_OPENERS[int(rng.integers(len(_OPENERS)))])
        for c, (s, r, o) in enumerate(trip_ids):
            if c:
                tokens += [","] if c < len(trip_ids) - 1 else ["and"]
            tokens += entities[s].split() + rel_defs[r][1].split() + entities[o].split()
        tokens.append(".")
        spans = locate_entities(tokens, [entities[e] for s, _, o in trip_ids for e in (s, o)])
        triples = list(dict.fromkeys(Triple(rel_defs[r][0], spans[entities[s]], spans[entities[o]])
                                     for s, r, o in trip_ids))
        sentences.append(Sentence(" ".join(tokens), tokens, triples))
        manifest.append({"index": k, "pattern": pattern,
                         "triples": [{"subject": entities[s], "relation": rel_defs[r][0], "object": entities[o]}
                                     for s, r, o in trip_ids]})
    relations = RelationInventory([name for name, _ in rel_defs])
    return _finish(sentences, MatchingMode.EXACT, relations, None, split, 0, manifest)
