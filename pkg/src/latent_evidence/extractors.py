"""Evidence extractors: four pipeline baselines and the joint relaxations.

Joint extractors share a calibrated score head
``c_i = w * max_claim (P x_claim) . (P x_i) + b`` and differ only in how the
scores become a mask. ``joint_relaxation`` returns the mask together with a
backward closure mapping dLoss/dmask to dLoss/d(unary, pair).
"""

from dataclasses import dataclass, field

import numpy as np

from . import differentiable as ops
from .errors import ConfigurationError, StateError
from .factor_graph import FactorGraphSpec, ImportanceScores, SelectionMask, scale_forward_tape
from .text import tfidf_fit, tfidf_score, tokenize

PIPELINE_KINDS = ("rule", "surface", "semantic", "hybrid")
JOINT_KINDS = ("attention", "reinforce", "fusedmax", "gumbel", "hardkuma", "scale")
KINDS = PIPELINE_KINDS + JOINT_KINDS
MIN_SURFACE_WORDS = 6  # evidence must have more than 5 words


@dataclass(frozen=True)
class ExtractorConfig:
    kind: str = "scale"
    top_k: int = 5
    budget_k: int = 6
    rule_n: int = 6
    use_pair: bool = True
    lambda_tv: float = 0.5
    gumbel_temperature: float = 0.5
    attention_temperature: float = 1.0
    kuma_scale: float = 4.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown extractor kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if min(self.top_k, self.budget_k, self.rule_n) < 0:
            raise ConfigurationError("k / budget / N must be nonnegative")
        if min(self.lambda_tv, self.gumbel_temperature, self.attention_temperature, self.kuma_scale) <= 0:
            raise ConfigurationError("lambda_tv and temperatures must be positive")


@dataclass(frozen=True)
class ExtractionResult:
    mask: SelectionMask
    selected_indices: tuple
    scores_used: ImportanceScores = None
    extras: dict = field(default_factory=dict, compare=False)


def _result(values, selected, scores=None, mode="exact", **extras):
    mask = SelectionMask(values, mode=mode)
    return ExtractionResult(mask, tuple(int(i) for i in sorted(selected)), scores, extras)


def _top_k(scores, k, eligible=None):
    """Indices of the k highest scores; ties go to the lower index."""
    idx = np.arange(len(scores)) if eligible is None else np.flatnonzero(eligible)
    order = idx[np.argsort(-np.asarray(scores)[idx], kind="stable")]
    return order[:k]


def _hard(indices, n):
    values = np.zeros(n)
    values[list(indices)] = 1.0
    return _result(values, indices)


# -- pipeline extractors -----------------------------------------------------

def extract_rule(enc, n=6):
    """The ``n`` sentences around each document's snippet anchor."""
    inst = enc.instance
    if inst.snippet_anchor is None or len(inst.snippet_anchor) != len(inst.documents):
        raise ConfigurationError("rule extractor needs one snippet anchor per document")
    chosen = []
    for offset, doc, anchor in zip(inst.doc_offsets, inst.documents, inst.snippet_anchor):
        width = min(n, len(doc))
        start = min(max(anchor - n // 2, 0), len(doc) - width)
        chosen.extend(range(offset + start, offset + start + width))
    return _hard(chosen, inst.n_sentences)


def surface_scores(enc, index=None):
    sents = enc.instance.sentences
    index = index if index is not None else tfidf_fit(sents)
    return np.array([tfidf_score(index, enc.claim_text, s) for s in sents])


def surface_eligible(enc):
    return np.array([len(tokenize(s)) >= MIN_SURFACE_WORDS for s in enc.instance.sentences], dtype=bool)


def extract_surface(enc, k=5, index=None):
    """Top-k TF-IDF matches to the claim among sentences with more than 5 words."""
    picked = _top_k(surface_scores(enc, index), k, surface_eligible(enc))
    return _hard(picked, enc.n_sentences)


def semantic_scores(enc):
    norms = np.linalg.norm(enc.doc_vecs, axis=1) * np.linalg.norm(enc.claim_emb)
    dots = enc.doc_vecs @ enc.claim_emb
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)


def extract_semantic(enc, k=5):
    """Top-k cosine similarity between the mean claim embedding and each sentence."""
    return _hard(_top_k(semantic_scores(enc), k), enc.n_sentences)


def _reciprocal_rank(scores):
    ranks = np.empty(len(scores))
    ranks[np.argsort(-scores, kind="stable")] = np.arange(len(scores))
    return 1.0 / (1.0 + ranks)


def hybrid_features(enc, index=None):
    """``[tfidf reciprocal rank, tfidf score, cosine reciprocal rank, cosine score]``."""
    tf = surface_scores(enc, index)
    cos = semantic_scores(enc)
    return np.column_stack([_reciprocal_rank(tf), tf, _reciprocal_rank(cos), cos])


def extract_hybrid(enc, ranker, k=5, index=None):
    """Top-k by a linear ranker over :func:`hybrid_features`, surface-eligible sentences only."""
    if ranker is None:
        raise StateError("hybrid extractor needs trained ranker weights")
    w = np.asarray(ranker, dtype=float)
    return _hard(_top_k(hybrid_features(enc, index) @ w, k, surface_eligible(enc)), enc.n_sentences)


def extract_pipeline(enc, cfg, ranker=None):
    if cfg.kind == "rule":
        return extract_rule(enc, cfg.rule_n)
    if cfg.kind == "surface":
        return extract_surface(enc, cfg.top_k)
    if cfg.kind == "semantic":
        return extract_semantic(enc, cfg.top_k)
    if cfg.kind == "hybrid":
        return extract_hybrid(enc, ranker, cfg.top_k)
    raise ConfigurationError(f"{cfg.kind!r} is not a pipeline extractor")


# -- shared score head ---------------------------------------------------------

def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def score_head(enc, params, use_pair=True):
    """Calibrated ImportanceScores for one encoded instance plus a backward cache."""
    v = params.values
    proj = v["proj"]
    ec = enc.claim_vecs @ proj.T
    ed = enc.doc_vecs @ proj.T
    m = ec @ ed.T
    arg = m.argmax(axis=0)
    raw = m[arg, np.arange(m.shape[1])]
    unary = float(v["calib_w"]) * raw + float(v["calib_b"])
    n = enc.n_sentences
    r = _softplus(float(v["pair_rho"])) if use_pair else 0.0
    pair = np.full(max(n - 1, 0), r)
    scores = ImportanceScores(unary, pair, enc.boundaries)
    return scores, (ec, ed, arg, raw)


def score_head_backward(enc, params, cache, grad_unary, grad_pair, use_pair=True, want_inputs=False):
    """Accumulate score-head gradients into ``params.grads``.

    Returns dLoss/d(doc_vecs) when ``want_inputs`` (for end-to-end checks).
    """
    v, g = params.values, params.grads
    ec, ed, arg, raw = cache
    w = float(v["calib_w"])
    g["calib_w"] += grad_unary @ raw
    g["calib_b"] += grad_unary.sum()
    if use_pair and grad_pair.size:
        edges = np.ones(grad_pair.size, dtype=bool)
        if enc.boundaries:
            edges[list(enc.boundaries)] = False
        g["pair_rho"] += grad_pair[edges].sum() * _sigmoid(float(v["pair_rho"]))
    g_raw = w * grad_unary
    d_ed = g_raw[:, None] * ec[arg]
    d_ec = np.zeros_like(ec)
    np.add.at(d_ec, arg, g_raw[:, None] * ed)
    g["proj"] += d_ed.T @ enc.doc_vecs + d_ec.T @ enc.claim_vecs
    if want_inputs:
        return d_ed @ v["proj"]
    return None


# -- joint relaxations ---------------------------------------------------------

def _scale_selection(mu, k):
    support = np.flatnonzero(mu > 0)
    if support.size > k:
        support = np.sort(_top_k(mu, k))
    return support


def joint_relaxation(kind, scores, cfg, rng=None, sample=True):
    """Turn calibrated scores into a mask.

    Returns ``(result, backward)`` where ``backward(grad_mask)`` gives
    ``(grad_unary, grad_pair)``. ``backward`` is ``None`` for ``reinforce``
    (trained with the score-function estimator instead).
    """
    c = scores.unary
    n = c.size
    zeros_pair = np.zeros(max(n - 1, 0))

    if kind == "scale":
        spec = FactorGraphSpec(n, min(cfg.budget_k, n), cfg.use_pair)
        mask, tape = scale_forward_tape(scores, spec)
        mu = mask.values
        result = _result(mu, _scale_selection(mu, spec.k), scores, mode="relaxed",
                         signature=tape.signature())

        def backward(grad):
            return ops.scale_backward(tape, grad)

        return result, backward

    if kind == "attention":
        z = c / cfg.attention_temperature
        e = np.exp(z - z.max())
        p = e / e.sum()
        result = _result(p, np.flatnonzero(p > 1.0 / n), scores, mode="relaxed")

        def backward(grad):
            return p * (grad - p @ grad) / cfg.attention_temperature, zeros_pair

        return result, backward

    if kind == "fusedmax":
        p, vjp, groups = ops.fusedmax_with_vjp(c, cfg.lambda_tv, return_groups=True)
        top = int(np.argmax(p))
        mu = p / p[top]
        result = _result(mu, np.flatnonzero(mu > 0), scores, mode="relaxed",
                         signature=(groups, top, tuple(np.flatnonzero(p > 0))))

        def backward(grad):
            g_p = grad / p[top]
            g_p[top] -= grad @ p / p[top] ** 2
            return vjp(g_p), zeros_pair

        return result, backward

    if kind == "gumbel":
        tau = cfg.gumbel_temperature
        if sample:
            y, _ = ops.gumbel_sigmoid_sample(c, tau, rng)
        else:
            y = _sigmoid(c / tau)
        result = _result(y, np.flatnonzero(y > 0.5), scores, mode="relaxed")

        def backward(grad):
            return ops.gumbel_sigmoid_grad(y, tau, grad), zeros_pair

        return result, backward

    if kind == "hardkuma":
        s = cfg.kuma_scale
        t = np.tanh(c / s)
        kappa = s * t
        kp = ops.HardKumaParams(np.exp(kappa), np.exp(-kappa))
        if sample:
            z, cache = ops.hardkuma_sample(kp, rng)
        else:
            z, cache = ops.hardkuma_sample(kp, None, u=np.full(n, 0.5))
        l0 = ops.hardkuma_expected_l0(kp)
        result = _result(z, np.flatnonzero(z > 0.5), scores, mode="relaxed", expected_l0=l0)
        d_l0_a, d_l0_b = ops.hardkuma_expected_l0_grad(kp)

        def backward(grad, l0_grad=0.0):
            ga, gb = ops.hardkuma_sample_grad(cache, grad)
            ga = ga + l0_grad * d_l0_a
            gb = gb + l0_grad * d_l0_b
            g_kappa = ga * kp.a - gb * kp.b
            return g_kappa * (1.0 - t ** 2), zeros_pair

        return result, backward

    if kind == "reinforce":
        p = _sigmoid(c)
        if sample:
            mu = (rng.uniform(size=n) < p).astype(float)
        else:
            mu = (p > 0.5).astype(float)
        return _result(mu, np.flatnonzero(mu), scores, probs=p), None

    raise ConfigurationError(f"{kind!r} is not a joint extractor")


def extract_attention(enc, params, temperature=1.0):
    scores, _ = score_head(enc, params, use_pair=False)
    cfg = ExtractorConfig(kind="attention", attention_temperature=temperature)
    return joint_relaxation("attention", scores, cfg)[0]


def extract_joint(enc, kind, params, cfg, rng=None, sample=False):
    """Joint extraction from model parameters (forward only)."""
    scores, _ = score_head(enc, params, use_pair=cfg.use_pair and kind == "scale")
    return joint_relaxation(kind, scores, cfg, rng=rng, sample=sample)[0]
