"""Claim verifiers over masked evidence: an MLP head and a graph (mixture) head."""

from dataclasses import dataclass

import numpy as np

from .corpus import N_LABELS
from .errors import DimensionError, ParameterError, StateError

HIDDEN = 200


@dataclass(frozen=True)
class VerdictDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (N_LABELS,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ParameterError("verdict probabilities must be a 7-way distribution")
        object.__setattr__(self, "probs", p)

    @property
    def label(self):
        return int(np.argmax(self.probs))


def _glorot(rng, rows, cols):
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_mlp(rng, dim, hidden=HIDDEN):
    return {
        "W1": _glorot(rng, hidden, 2 * dim),
        "b1": np.zeros(hidden),
        "W2": _glorot(rng, N_LABELS, hidden),
        "b2": np.zeros(N_LABELS),
    }


def init_graph(rng, dim, hidden=HIDDEN):
    params = init_mlp(rng, dim, hidden)
    params["q"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden)
    return params


def _softmax(z, axis=-1):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _mask_values(mask):
    return np.asarray(getattr(mask, "values", mask), dtype=float)


def mlp_verify(claim_emb, doc_embs, mask, params, return_cache=False):
    """Predict a verdict from the claim and the mask-weighted mean of the evidence.

    The evidence vector is ``sum(mu_i x_i) / sum(mu)`` (zero for an all-zero
    mask), concatenated with the claim embedding and fed through one tanh layer.
    """
    mu = _mask_values(mask)
    x = np.atleast_2d(doc_embs)
    if mu.shape != (x.shape[0],):
        raise DimensionError(f"mask length {mu.size} != {x.shape[0]} document sentences")
    if claim_emb.shape[0] != x.shape[1] or params["W1"].shape[1] != 2 * x.shape[1]:
        raise DimensionError("claim / document / verifier dimensions disagree")
    total = mu.sum()
    norm = total if total > 0 else 1.0
    evidence = mu @ x / norm
    inp = np.concatenate([claim_emb, evidence])
    h = np.tanh(params["W1"] @ inp + params["b1"])
    probs = _softmax(params["W2"] @ h + params["b2"])
    out = VerdictDistribution(probs)
    if not return_cache:
        return out
    cache = {"mu": mu, "x": x, "total": total, "norm": norm, "evidence": evidence,
             "inp": inp, "h": h, "probs": probs, "params": params}
    return out, cache


def mlp_backward(upstream, cache):
    """Reverse-mode gradients of the MLP verifier.

    Args:
        upstream: dLoss/dprobs (length 7).
        cache: from ``mlp_verify(..., return_cache=True)``.

    Returns:
        dict with parameter gradients ``W1, b1, W2, b2`` and input gradients
        ``claim_emb``, ``doc_embs`` and ``mask``.
    """
    if cache is None:
        raise StateError("mlp_backward needs the forward cache")
    p, h, params = cache["probs"], cache["h"], cache["params"]
    g = np.asarray(upstream, dtype=float)
    d_logits = p * (g - p @ g)
    d_h = params["W2"].T @ d_logits
    d_pre = d_h * (1.0 - h ** 2)
    d_inp = params["W1"].T @ d_pre
    dim = cache["x"].shape[1]
    d_ev = d_inp[dim:]
    mu, x, norm = cache["mu"], cache["x"], cache["norm"]
    d_mu = x @ d_ev / norm
    if cache["total"] > 0:
        d_mu -= cache["evidence"] @ d_ev / norm
    return {
        "W1": np.outer(d_pre, cache["inp"]),
        "b1": d_pre,
        "W2": np.outer(d_logits, h),
        "b2": d_logits,
        "claim_emb": d_inp[:dim],
        "doc_embs": np.outer(mu, d_ev) / norm,
        "mask": d_mu,
    }


def graph_verify(claim_emb, evidence_embs, params, node_weights=None, return_cache=False):
    """Mixture of per-node verdicts weighted by a readout attention.

    Each node is ``concat(claim, evidence_p)``. ``P(n_p | G)`` is proportional to
    ``w_p * exp(q . h_p)`` where ``w_p`` are optional node weights (extractor mask
    values). With no nodes the claim alone forms a single node.
    """
    e = np.asarray(evidence_embs, dtype=float).reshape(-1, claim_emb.shape[0])
    if node_weights is None:
        w = np.ones(e.shape[0])
    else:
        w = np.asarray(node_weights, dtype=float).reshape(-1)
        if w.shape[0] != e.shape[0]:
            raise DimensionError("one node weight per evidence node is required")
    empty = e.shape[0] == 0
    if empty:
        e = np.zeros((1, claim_emb.shape[0]))
        w = np.ones(1)
    # canonical node order makes the output bit-identical under any input permutation
    order = np.lexsort(np.column_stack([e, w]).T[::-1])
    e, w = e[order], w[order]
    if params["W1"].shape[1] != claim_emb.shape[0] + e.shape[1]:
        raise DimensionError("graph verifier input dimension mismatch")
    u = np.hstack([np.broadcast_to(claim_emb, e.shape), e])
    h = np.tanh(u @ params["W1"].T + params["b1"])
    node_probs = _softmax(h @ params["W2"].T + params["b2"], axis=1)
    a = h @ params["q"]
    ea = np.exp(a - a.max())
    z = w @ ea
    alpha = w * ea / z
    probs = alpha @ node_probs
    probs = probs / probs.sum()
    out = VerdictDistribution(probs)
    if not return_cache:
        return out
    cache = {"u": u, "h": h, "node_probs": node_probs, "ea": ea, "z": z, "alpha": alpha,
             "params": params, "empty": empty, "dim": claim_emb.shape[0], "order": order}
    return out, cache


def graph_backward(upstream, cache):
    """Gradients of :func:`graph_verify` for parameters, claim, evidence and node weights."""
    if cache is None:
        raise StateError("graph_backward needs the forward cache")
    params, h, node_probs, alpha = cache["params"], cache["h"], cache["node_probs"], cache["alpha"]
    g = np.asarray(upstream, dtype=float)
    g_alpha = node_probs @ g
    centred = g_alpha - alpha @ g_alpha
    g_a = alpha * centred
    g_w = cache["ea"] / cache["z"] * centred
    g_np = alpha[:, None] * g[None, :]
    d_logits = node_probs * (g_np - (node_probs * g_np).sum(axis=1, keepdims=True))
    d_h = d_logits @ params["W2"] + g_a[:, None] * params["q"][None, :]
    d_pre = d_h * (1.0 - h ** 2)
    d_u = d_pre @ params["W1"]
    dim = cache["dim"]
    order = cache["order"]
    g_e = np.empty_like(d_u[:, dim:])
    g_e[order] = d_u[:, dim:]
    g_w_orig = np.empty_like(g_w)
    g_w_orig[order] = g_w
    grads = {
        "W1": d_pre.T @ cache["u"],
        "b1": d_pre.sum(axis=0),
        "W2": d_logits.T @ h,
        "b2": d_logits.sum(axis=0),
        "q": h.T @ g_a,
        "claim_emb": d_u[:, :dim].sum(axis=0),
        "evidence_embs": g_e,
        "node_weights": g_w_orig,
    }
    if cache["empty"]:
        grads["evidence_embs"] = np.zeros((0, dim))
        grads["node_weights"] = np.zeros(0)
    return grads


def nll_loss(pred, gold):
    """``-log(p[gold] + 1e-12)``."""
    probs = getattr(pred, "probs", pred)
    if not 0 <= gold < N_LABELS:
        raise ParameterError(f"gold label {gold} outside [0, {N_LABELS})")
    return float(-np.log(probs[gold] + 1e-12))


def nll_grad(pred, gold):
    probs = getattr(pred, "probs", pred)
    g = np.zeros(N_LABELS)
    g[gold] = -1.0 / (probs[gold] + 1e-12)
    return g
