"""Deterministic sentence features: signed feature hashing and TF-IDF."""

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, ParameterError, StateError

_SENT_RE = re.compile(r"(?<=[.!?])\s+")
_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def split_sentences(text):
    """Split on ``.``, ``!`` or ``?`` followed by whitespace; drop empties."""
    return [part.strip() for part in _SENT_RE.split(text) if part.strip()]


def tokenize(text):
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class SentenceEmbedding:
    vector: np.ndarray
    norm: float


def _bucket(feature, dim, seed):
    digest = hashlib.blake2b(f"{seed}\x1f{feature}".encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "little")
    return value % dim, 1.0 if (value >> 63) & 1 else -1.0


@lru_cache(maxsize=200_000)
def _token_features(token, dim, seed):
    features = [token]
    padded = f"#{token}#"
    features.extend(padded[i:i + 3] for i in range(len(padded) - 2))
    out = {}
    for feat in features:
        idx, sign = _bucket(feat, dim, seed)
        out[idx] = out.get(idx, 0.0) + sign
    return tuple(sorted(out.items()))


def hashed_vector(sentence, dim=64, seed=0):
    """Raw L2-normalized hashed bag of tokens and character trigrams."""
    if dim < 8:
        raise ParameterError("embedding dimension must be >= 8")
    vec = np.zeros(dim)
    for tok in tokenize(sentence):
        for idx, val in _token_features(tok, dim, seed):
            vec[idx] += val
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def hashed_embedding(sentence, dim=64, seed=0):
    vec = hashed_vector(sentence, dim, seed)
    return SentenceEmbedding(vec, float(np.linalg.norm(vec)))


def embed_sentences(sentences, dim=64, seed=0):
    """Stack hashed vectors for a list of sentences into an ``(n, dim)`` array."""
    if not sentences:
        return np.zeros((0, dim))
    return np.stack([hashed_vector(s, dim, seed) for s in sentences])


def importance_matrix(claim_vecs, doc_vecs, aggregation="max"):
    """Per-document-sentence importance from claim/doc dot products.

    Computes the ``L_c x L_d`` matrix ``x_c x_d^T`` and reduces over claim
    sentences. Returns ``(scores, argmax)``; ``argmax`` is the winning claim row
    per document sentence under ``max`` (``None`` for ``mean``).
    """
    xc = np.atleast_2d(np.asarray(claim_vecs, dtype=float))
    xd = np.atleast_2d(np.asarray(doc_vecs, dtype=float))
    if xc.shape[1] != xd.shape[1]:
        raise DimensionError(f"claim dim {xc.shape[1]} != doc dim {xd.shape[1]}")
    m = xc @ xd.T
    if aggregation == "max":
        arg = m.argmax(axis=0)
        return m[arg, np.arange(m.shape[1])], arg
    if aggregation == "mean":
        return m.mean(axis=0), None
    raise ParameterError(f"unknown aggregation {aggregation!r}")


@dataclass(frozen=True)
class TfidfIndex:
    vocabulary: dict
    idf: np.ndarray
    doc_count: int

    def vector(self, text):
        vec = np.zeros(len(self.vocabulary))
        for tok, count in Counter(tokenize(text)).items():
            col = self.vocabulary.get(tok)
            if col is not None:
                vec[col] = count * self.idf[col]
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def tfidf_fit(corpus):
    """Smoothed idf ``ln((1 + N) / (1 + df)) + 1`` over a list of texts."""
    df = Counter()
    for text in corpus:
        df.update(set(tokenize(text)))
    vocab = {tok: i for i, tok in enumerate(sorted(df))}
    n = len(corpus)
    idf = np.array([math.log((1 + n) / (1 + df[tok])) + 1.0 for tok in sorted(df)])
    return TfidfIndex(vocab, idf, n)


def tfidf_score(index, query, sentence):
    """Cosine of tf-idf vectors; out-of-vocabulary terms are ignored."""
    if index is None:
        raise StateError("tfidf_score called before tfidf_fit")
    return float(np.clip(index.vector(query) @ index.vector(sentence), 0.0, 1.0))
