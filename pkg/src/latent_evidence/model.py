"""Joint extractor + verifier model: parameters, encoding and per-instance loss."""

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import verifiers as V
from .differentiable import reinforce_gradient
from .errors import ConfigurationError
from .extractors import (
    JOINT_KINDS,
    PIPELINE_KINDS,
    ExtractorConfig,
    extract_pipeline,
    joint_relaxation,
    score_head,
    score_head_backward,
)
from .text import embed_sentences, split_sentences

VERIFIER_CHOICES = ("mlp", "graph", "both")
# SCALE reads the bias as a sparsity threshold on mu, the sigmoid-based
# extractors as a prior keep rate; each prefers a different starting point.
CALIB_B_DEFAULTS = {"scale": -0.5}
CALIB_B_FALLBACK = -1.0


@dataclass(frozen=True)
class ModelConfig:
    extractor: str = "scale"
    budget_k: int = 6
    top_k: int = 5
    rule_n: int = 6
    use_pair: bool = True
    pair_init: float = 0.5
    lambda_tv: float = 0.5
    gumbel_temperature: float = 0.5
    attention_temperature: float = 1.0
    l0_weight: float = 0.01
    calib_w_init: float = 4.0
    calib_b_init: float = None  # None: CALIB_B_DEFAULTS for the extractor
    dim: int = 64
    hash_seed: int = 0
    hidden: int = V.HIDDEN
    verifier: str = "both"
    use_metadata: bool = False

    def __post_init__(self):
        if self.verifier not in VERIFIER_CHOICES:
            raise ConfigurationError(f"verifier must be one of {VERIFIER_CHOICES}")
        if self.pair_init <= 0:
            raise ConfigurationError("pair_init must be positive")
        if self.calib_b_init is None:
            object.__setattr__(self, "calib_b_init",
                               CALIB_B_DEFAULTS.get(self.extractor, CALIB_B_FALLBACK))
        self.extractor_config()  # validates kind and kind-specific values

    def extractor_config(self):
        return ExtractorConfig(
            kind=self.extractor,
            top_k=self.top_k,
            budget_k=self.budget_k,
            rule_n=self.rule_n,
            use_pair=self.use_pair,
            lambda_tv=self.lambda_tv,
            gumbel_temperature=self.gumbel_temperature,
            attention_temperature=self.attention_temperature,
        )

    @property
    def heads(self):
        return ("mlp", "graph") if self.verifier == "both" else (self.verifier,)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class EncodedInstance:
    instance: object
    claim_text: str
    claim_vecs: np.ndarray
    claim_emb: np.ndarray
    doc_vecs: np.ndarray
    boundaries: frozenset
    # pipeline masks are fixed per instance, so they are memoized here
    pipeline_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_sentences(self):
        return self.doc_vecs.shape[0]

    @property
    def gold(self):
        return self.instance.gold_evidence

    @property
    def label(self):
        return self.instance.label


def claim_text(instance, use_metadata=False):
    if not use_metadata or not instance.metadata:
        return instance.claim
    meta = " ".join(f"{k} {v}" for k, v in sorted(instance.metadata.items()))
    return f"{instance.claim} {meta}"


def encode_instance(instance, dim=64, seed=0, use_metadata=False):
    text = claim_text(instance, use_metadata)
    claim_sents = split_sentences(text) or [text]
    claim_vecs = embed_sentences(claim_sents, dim, seed)
    return EncodedInstance(
        instance=instance,
        claim_text=text,
        claim_vecs=claim_vecs,
        claim_emb=claim_vecs.mean(axis=0),
        doc_vecs=embed_sentences(instance.sentences, dim, seed),
        boundaries=instance.doc_boundaries,
    )


def encode_all(instances, cfg):
    return [encode_instance(inst, cfg.dim, cfg.hash_seed, cfg.use_metadata) for inst in instances]


class ModelParams:
    """Named parameter tensors with matching gradient slots.

    ``extras`` holds non-gradient state saved with the model (hybrid ranker
    weights).
    """

    def __init__(self, values, config, extras=None):
        self.values = {k: np.asarray(v, dtype=float) for k, v in values.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.values.items()}
        self.config = config
        self.extras = dict(extras or {})

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def head(self, name):
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def add_head_grads(self, name, grads):
        for key, val in grads.items():
            full = f"{name}.{key}"
            if full in self.grads:
                self.grads[full] += val

    def copy(self):
        out = ModelParams({k: v.copy() for k, v in self.values.items()}, self.config, self.extras)
        return out

    def __eq__(self, other):
        return (
            isinstance(other, ModelParams)
            and self.config == other.config
            and self.extras == other.extras
            and self.values.keys() == other.values.keys()
            and all(np.array_equal(self.values[k], other.values[k]) for k in self.values)
        )


def init_params(cfg, rng):
    values = {
        "proj": np.eye(cfg.dim),
        "calib_w": np.array(cfg.calib_w_init),
        "calib_b": np.array(cfg.calib_b_init),
        "pair_rho": np.array(np.log(np.expm1(cfg.pair_init))),
    }
    for k, v in V.init_mlp(rng, cfg.dim, cfg.hidden).items():
        values[f"mlp.{k}"] = v
    for k, v in V.init_graph(rng, cfg.dim, cfg.hidden).items():
        values[f"graph.{k}"] = v
    return ModelParams(values, cfg)


@dataclass
class Forward:
    result: object
    probs: dict
    loss: float
    nll: float


def _verify(enc, params, head, mu, cache=False):
    if head == "mlp":
        return V.mlp_verify(enc.claim_emb, enc.doc_vecs, mu, params.head("mlp"), return_cache=cache)
    nodes = np.flatnonzero(mu > 0)
    return V.graph_verify(enc.claim_emb, enc.doc_vecs[nodes], params.head("graph"),
                          node_weights=mu[nodes], return_cache=cache)


def _verify_backward(enc, params, head, mu, upstream, cache):
    """Backprop one verifier head; returns (dLoss/dmask, dLoss/ddoc_vecs)."""
    n = enc.n_sentences
    if head == "mlp":
        g = V.mlp_backward(upstream, cache)
        params.add_head_grads("mlp", {k: g[k] for k in ("W1", "b1", "W2", "b2")})
        return g["mask"], g["doc_embs"]
    g = V.graph_backward(upstream, cache)
    params.add_head_grads("graph", {k: g[k] for k in ("W1", "b1", "W2", "b2", "q")})
    nodes = np.flatnonzero(mu > 0)
    d_mu = np.zeros(n)
    d_x = np.zeros_like(enc.doc_vecs)
    d_mu[nodes] = g["node_weights"]
    d_x[nodes] = g["evidence_embs"]
    return d_mu, d_x


def extract(enc, params, rng=None, sample=False):
    """Run the configured extractor; returns (result, backward-or-None, head cache)."""
    cfg = params.config
    ecfg = cfg.extractor_config()
    if cfg.extractor in PIPELINE_KINDS:
        ranker = params.extras.get("hybrid_weights")
        key = (cfg.extractor, ecfg.top_k, ecfg.rule_n, tuple(ranker) if ranker is not None else None)
        if key not in enc.pipeline_cache:
            enc.pipeline_cache[key] = extract_pipeline(enc, ecfg, ranker)
        return enc.pipeline_cache[key], None, None
    use_pair = cfg.use_pair and cfg.extractor == "scale"
    scores, cache = score_head(enc, params, use_pair=use_pair)
    result, backward = joint_relaxation(cfg.extractor, scores, ecfg, rng=rng, sample=sample)
    return result, backward, cache


def instance_forward_backward(enc, params, rng=None, train=True, backward=True,
                              baseline=None, want_inputs=False):
    """Loss of one instance; when ``backward`` gradients are added to ``params.grads``.

    The loss is the sum of the NLL of every configured verifier head, plus the
    expected-L0 penalty for HardKuma. REINFORCE uses ``-NLL`` as reward with
    ``baseline`` (a MovingAverageBaseline) and the L0 weight from the config.
    Returns ``(Forward, d_doc_vecs or None)``.
    """
    cfg = params.config
    result, relax_backward, head_cache = extract(enc, params, rng=rng, sample=train)
    mu = result.mask.values
    nll, probs, caches = 0.0, {}, {}
    for head in cfg.heads:
        pred, cache = _verify(enc, params, head, mu, cache=True)
        probs[head] = pred.probs
        caches[head] = cache
        nll += V.nll_loss(pred, enc.label)
    loss = nll
    l0 = result.extras.get("expected_l0")
    if cfg.extractor == "hardkuma" and l0 is not None:
        loss += cfg.l0_weight * float(np.sum(l0))
    fwd = Forward(result, probs, loss, nll)
    if not backward:
        return fwd, None

    d_mu = np.zeros(enc.n_sentences)
    d_x = np.zeros_like(enc.doc_vecs)
    for head in cfg.heads:
        up = V.nll_grad(probs[head], enc.label)
        gm, gx = _verify_backward(enc, params, head, mu, up, caches[head])
        d_mu += gm
        d_x += gx

    kind = cfg.extractor
    if kind in JOINT_KINDS:
        use_pair = cfg.use_pair and kind == "scale"
        if kind == "reinforce":
            reward = -nll
            base = baseline.value if baseline is not None else 0.0
            ascent = reinforce_gradient(result.scores_used.unary, mu, reward, base, cfg.l0_weight)
            g_unary, g_pair = -ascent, np.zeros(max(enc.n_sentences - 1, 0))
            if baseline is not None:
                baseline.update(reward)
        elif kind == "hardkuma":
            g_unary, g_pair = relax_backward(d_mu, l0_grad=cfg.l0_weight)
        else:
            g_unary, g_pair = relax_backward(d_mu)
        d_in = score_head_backward(enc, params, head_cache, g_unary, g_pair,
                                   use_pair=use_pair,
                                   want_inputs=want_inputs)
        if d_in is not None:
            d_x += d_in
    return fwd, (d_x if want_inputs else None)
