"""Synthetic claim/document corpora with planted contiguous gold evidence."""

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParameterError

FORMAT_TAG = "#v1"
LABELS = ("False", "Mostly False", "Partly True", "Mostly True", "True", "Unverifiable", "Other")
N_LABELS = len(LABELS)
SPLITS = ("train", "dev", "test")

_FILLER = (
    "the", "a", "of", "in", "on", "and", "to", "for", "with", "was", "were", "is",
    "that", "this", "by", "at", "from", "as", "it", "its", "after", "before",
    "during", "while", "also", "which", "their", "new", "local", "week",
)
_LANGUAGES = ("en", "es", "pt", "it", "de", "fr", "hi", "id", "ar", "tr")
_CLAIM_TEMPLATES = (
    "{E} {c1} the {c2} of {c3}.",
    "Officials say {E} {c1} {c2} and {c3}.",
    "{E} has {c1} every {c2} in {c3}.",
    "A viral post claims {E} {c1} more {c2} than {c3}.",
    "{E} was seen {c1} near the {c2} {c3}.",
)


@dataclass
class ClaimInstance:
    id: str
    claim: str
    documents: list
    snippet_anchor: list
    gold_evidence: list = None
    label: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.label < N_LABELS:
            raise ParameterError(f"label {self.label} outside [0, {N_LABELS})")
        if len(self.snippet_anchor) != len(self.documents):
            raise ParameterError("one snippet anchor per document is required")
        for anchor, doc in zip(self.snippet_anchor, self.documents):
            if not 0 <= anchor < max(len(doc), 1):
                raise ParameterError("snippet anchor outside its document")
        if self.gold_evidence is not None:
            total = self.n_sentences
            if any(not 0 <= g < total for g in self.gold_evidence):
                raise ParameterError("gold evidence index out of bounds")
            self.gold_evidence = sorted(self.gold_evidence)

    @property
    def sentences(self):
        return [s for doc in self.documents for s in doc]

    @property
    def n_sentences(self):
        return sum(len(doc) for doc in self.documents)

    @property
    def doc_offsets(self):
        return np.cumsum([0] + [len(d) for d in self.documents])[:-1].tolist()

    @property
    def doc_boundaries(self):
        """Edge indices between the last sentence of a document and the next."""
        ends = np.cumsum([len(d) for d in self.documents])[:-1]
        return frozenset(int(e) - 1 for e in ends if 0 < e < self.n_sentences)

    def to_json(self):
        return json.dumps(
            {
                "id": self.id,
                "claim": self.claim,
                "documents": self.documents,
                "snippet_anchor": self.snippet_anchor,
                "gold_evidence": self.gold_evidence,
                "label": self.label,
                "metadata": self.metadata,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(
            id=d["id"],
            claim=d["claim"],
            documents=[list(doc) for doc in d["documents"]],
            snippet_anchor=list(d["snippet_anchor"]),
            gold_evidence=None if d["gold_evidence"] is None else list(d["gold_evidence"]),
            label=int(d["label"]),
            metadata=dict(d["metadata"]),
        )


@dataclass(frozen=True)
class GenConfig:
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    docs_per_claim: int = 3
    min_sentences: int = 26
    max_sentences: int = 34
    min_run: int = 2
    max_run: int = 4
    label_probs: tuple = None
    cue_noise: float = 0.5
    near_miss: float = 0.05
    vocab_seed: int = 7
    seed: int = 0

    def __post_init__(self):
        sizes = (self.n_train, self.n_dev, self.n_test)
        if min(sizes) < 0:
            raise ConfigurationError("split sizes must be nonnegative")
        if self.docs_per_claim < 1:
            raise ConfigurationError("need at least one document per claim")
        if not 1 <= self.min_run <= self.max_run <= self.min_sentences <= self.max_sentences:
            raise ConfigurationError("inconsistent run/document length bounds")
        if self.label_probs is not None:
            probs = np.asarray(self.label_probs, dtype=float)
            if probs.shape != (N_LABELS,) or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
                raise ConfigurationError("label_probs must be a distribution over 7 labels")


@dataclass(frozen=True)
class Vocabulary:
    entities: tuple
    content: tuple
    cues: tuple  # one tuple of cue words per label

    def decode_label(self, sentences):
        """Rule decoder: the label whose cue words occur most often (ties to lowest)."""
        lookup = {w: lab for lab, words in enumerate(self.cues) for w in words}
        counts = Counter(lookup[t] for s in sentences for t in s.lower().strip(".").split() if t in lookup)
        if not counts:
            return N_LABELS - 1
        top = max(counts.values())
        return min(lab for lab, c in counts.items() if c == top)


def build_vocabulary(seed=7, n_entities=300, n_content=400, cues_per_label=5):
    rng = np.random.default_rng(seed)
    onsets = list("bcdfghjklmnprstvwz") + ["br", "dr", "gl", "kr", "pl", "st", "tr", "zh"]
    vowels = ["a", "e", "i", "o", "u", "ai", "ou", "ei"]
    seen = set(_FILLER)

    def word(n_syll, suffix=""):
        while True:
            w = "".join(onsets[rng.integers(len(onsets))] + vowels[rng.integers(len(vowels))]
                        for _ in range(n_syll)) + suffix
            if w not in seen:
                seen.add(w)
                return w

    entities = tuple(word(3, "n") for _ in range(n_entities))
    content = tuple(word(2) for _ in range(n_content))
    cues = tuple(tuple(word(2, "x") for _ in range(cues_per_label)) for _ in range(N_LABELS))
    return Vocabulary(entities, content, cues)


def _sentence(rng, words, min_len=8, max_len=12):
    words = list(words)
    target = int(rng.integers(min_len, max_len + 1))
    while len(words) < target:
        words.append(_FILLER[rng.integers(len(_FILLER))])
    order = rng.permutation(len(words))
    text = " ".join(words[i] for i in order)
    return text[0].upper() + text[1:] + "."


def _instance(rng, cfg, vocab, ident):
    probs = cfg.label_probs if cfg.label_probs is not None else np.full(N_LABELS, 1.0 / N_LABELS)
    label = int(rng.choice(N_LABELS, p=probs))
    entity = vocab.entities[rng.integers(len(vocab.entities))]
    claim_words = [vocab.content[i] for i in rng.choice(len(vocab.content), size=3, replace=False)]
    template = _CLAIM_TEMPLATES[rng.integers(len(_CLAIM_TEMPLATES))]
    claim = template.format(E=entity, c1=claim_words[0], c2=claim_words[1], c3=claim_words[2])
    claim = claim[0].upper() + claim[1:]
    cues = vocab.cues[label]

    gold_doc = int(rng.integers(cfg.docs_per_claim))
    documents, anchors, gold = [], [], []
    offset = 0
    for d in range(cfg.docs_per_claim):
        n_sent = int(rng.integers(cfg.min_sentences, cfg.max_sentences + 1))
        run_len = int(rng.integers(cfg.min_run, cfg.max_run + 1)) if d == gold_doc else 0
        start = int(rng.integers(0, n_sent - run_len + 1)) if d == gold_doc else -1
        sents = []
        for j in range(n_sent):
            if d == gold_doc and start <= j < start + run_len:
                first = j == start
                words = []
                if first or rng.random() < 0.5:
                    words.append(entity)
                n_shared = 2 if first else 1
                words.extend(claim_words[i] for i in rng.choice(3, size=n_shared, replace=False))
                words.extend(cues[i] for i in rng.choice(len(cues), size=int(rng.integers(1, 3)), replace=False))
                sents.append(_sentence(rng, words))
                gold.append(offset + j)
            else:
                words = []
                if rng.random() < 0.5:
                    words.append(vocab.entities[rng.integers(len(vocab.entities))])
                words.extend(vocab.content[i] for i in rng.choice(len(vocab.content), size=2, replace=False))
                if rng.random() < cfg.near_miss:
                    words.append(claim_words[rng.integers(3)])
                if rng.random() < cfg.cue_noise:
                    other = vocab.cues[rng.integers(N_LABELS)]
                    words.append(other[rng.integers(len(other))])
                sents.append(_sentence(rng, words))
        if d == gold_doc:
            anchors.append(start + run_len // 2)
        else:
            anchors.append(int(rng.integers(n_sent)))
        documents.append(sents)
        offset += n_sent
    metadata = {
        "language": _LANGUAGES[rng.integers(len(_LANGUAGES))],
        "date": f"{int(rng.integers(2015, 2023))}-{int(rng.integers(1, 13)):02d}-{int(rng.integers(1, 29)):02d}",
    }
    return ClaimInstance(ident, claim, documents, anchors, gold, label, metadata)


def generate_corpus(cfg=None):
    """Generate ``{"train": [...], "dev": [...], "test": [...]}``.

    Each split draws from its own stream seeded by ``(seed, split index)``, so
    resizing one split leaves the others unchanged.
    """
    cfg = cfg or GenConfig()
    vocab = build_vocabulary(cfg.vocab_seed)
    out = {}
    for idx, (name, size) in enumerate(zip(SPLITS, (cfg.n_train, cfg.n_dev, cfg.n_test))):
        rng = np.random.default_rng([cfg.seed, idx])
        out[name] = [_instance(rng, cfg, vocab, f"{name}-{i:06d}") for i in range(size)]
    return out


def dumps_jsonl(instances):
    return "".join([FORMAT_TAG + "\n"] + [inst.to_json() + "\n" for inst in instances])


def loads_jsonl(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith(FORMAT_TAG):
        raise ConfigurationError("dataset file is missing the '#v1' header line")
    return [ClaimInstance.from_json(line) for line in lines[1:] if line.strip() and not line.startswith("#")]


def write_jsonl(path, instances):
    from .io import atomic_write_text

    atomic_write_text(path, dumps_jsonl(instances))


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return loads_jsonl(fh.read())
