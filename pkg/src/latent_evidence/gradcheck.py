"""Finite-difference gradient suites behind the ``gradcheck`` command.

Each suite draws random instances, rejects those whose active set (solver
structure, selection support, score-head argmax) changes under a ±h
perturbation, and reports the worst relative error over the accepted ones.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import verifiers as V
from .corpus import GenConfig, generate_corpus
from .differentiable import scale_backward
from .factor_graph import FactorGraphSpec, ImportanceScores, scale_forward_tape
from .model import ModelConfig, encode_instance, extract, init_params, instance_forward_backward

H = 1e-5
TOLERANCE = 1e-4


@dataclass
class SuiteResult:
    name: str
    cases: int
    rejected: int
    max_error: float

    @property
    def passed(self):
        return self.cases > 0 and self.max_error <= TOLERANCE


def _rel(numeric, analytic):
    return abs(numeric - analytic) / max(1.0, abs(numeric))


def _central(f, x, i, h=H):
    orig = x.flat[i]
    x.flat[i] = orig + h
    up = f()
    x.flat[i] = orig - h
    down = f()
    x.flat[i] = orig
    return (up - down) / (2.0 * h)


def _stable(sig, x, i, base, h=H):
    orig = x.flat[i]
    x.flat[i] = orig + h
    a = sig()
    x.flat[i] = orig - h
    b = sig()
    x.flat[i] = orig
    return a == base and b == base


# -- SCALE -------------------------------------------------------------------

def _scale_case(rng):
    n = int(rng.integers(4, 11))
    s = rng.uniform(-1.0, 2.0, n)
    r = rng.uniform(0.0, 1.0, n - 1)
    bounds = frozenset(int(b) for b in rng.choice(n - 1, size=int(rng.integers(0, 2)), replace=False))
    k = int(rng.integers(1, n + 1))
    u = rng.normal(size=n)
    return s, r, bounds, k, u


def check_scale_case(s, r, bounds, k, u, scale_bug=1.0):
    """Max error of ``scale_backward`` for loss ``u.mu + 0.5 ||mu||^2``, or None if unstable."""
    n = s.size
    spec = FactorGraphSpec(n, k, True)

    def solve():
        return scale_forward_tape(ImportanceScores(s, r, bounds), spec)

    mask, tape = solve()
    mu = mask.values
    grad_s, grad_r = scale_backward(tape, u + mu)
    grad_s = grad_s * scale_bug

    def loss():
        m = solve()[0].values
        return u @ m + 0.5 * m @ m

    def sig():
        return solve()[1].signature()

    base = tape.signature()
    err = 0.0
    for i in range(n):
        if not _stable(sig, s, i, base):
            return None
        err = max(err, _rel(_central(loss, s, i), grad_s[i]))
    for i in range(n - 1):
        if i in bounds:
            continue
        if not _stable(sig, r, i, base):
            return None
        err = max(err, _rel(_central(loss, r, i), grad_r[i]))
    return err


def scale_suite(cases, seed, scale_bug=1.0):
    rng = np.random.default_rng([seed, 1])
    worst, rejected, done = 0.0, 0, 0
    while done < cases:
        err = check_scale_case(*_scale_case(rng), scale_bug=scale_bug)
        if err is None:
            rejected += 1
            continue
        worst = max(worst, err)
        done += 1
    return SuiteResult("scale_backward", done, rejected, worst)


# -- verifier heads ----------------------------------------------------------

def _sampled(size, rng, limit):
    return np.arange(size) if size <= limit else rng.choice(size, size=limit, replace=False)


def check_mlp_case(rng, dim=8, n=5, hidden=V.HIDDEN, per_tensor=25):
    params = V.init_mlp(rng, dim, hidden)
    params["b1"] = rng.normal(0, 0.1, hidden)
    claim = rng.normal(size=dim)
    docs = rng.normal(size=(n, dim))
    mu = rng.uniform(0.05, 0.95, n) * (rng.uniform(0.2, 1.0) if rng.random() < 0.5 else 1.0)
    gold = int(rng.integers(V.N_LABELS))

    def loss():
        return V.nll_loss(V.mlp_verify(claim, docs, mu, params), gold)

    pred, cache = V.mlp_verify(claim, docs, mu, params, return_cache=True)
    grads = V.mlp_backward(V.nll_grad(pred, gold), cache)
    targets = dict(params, claim_emb=claim, doc_embs=docs, mask=mu)
    err = 0.0
    for name, arr in targets.items():
        for i in _sampled(arr.size, rng, per_tensor):
            err = max(err, _rel(_central(loss, arr, i), grads[name].flat[i]))
    return err


def check_graph_case(rng, dim=8, n=4, hidden=V.HIDDEN, per_tensor=25):
    params = V.init_graph(rng, dim, hidden)
    params["q"] = rng.normal(size=hidden)
    claim = rng.normal(size=dim)
    ev = rng.normal(size=(n, dim))
    w = rng.uniform(0.1, 1.0, n)
    gold = int(rng.integers(V.N_LABELS))

    def loss():
        return V.nll_loss(V.graph_verify(claim, ev, params, node_weights=w), gold)

    pred, cache = V.graph_verify(claim, ev, params, node_weights=w, return_cache=True)
    grads = V.graph_backward(V.nll_grad(pred, gold), cache)
    targets = dict(params, claim_emb=claim, evidence_embs=ev, node_weights=w)
    err = 0.0
    for name, arr in targets.items():
        for i in _sampled(arr.size, rng, per_tensor):
            err = max(err, _rel(_central(loss, arr, i), grads[name].flat[i]))
    return err


def mlp_suite(cases, seed):
    rng = np.random.default_rng([seed, 2])
    return SuiteResult("mlp_backward", cases, 0, max((check_mlp_case(rng) for _ in range(cases)), default=0.0))


def graph_suite(cases, seed):
    rng = np.random.default_rng([seed, 3])
    return SuiteResult("graph_backward", cases, 0, max((check_graph_case(rng) for _ in range(cases)), default=0.0))


# -- end to end --------------------------------------------------------------

def toy_instances(seed, count):
    cfg = GenConfig(n_train=count, n_dev=0, n_test=0, docs_per_claim=2, min_sentences=5,
                    max_sentences=7, min_run=2, max_run=3, seed=seed)
    return generate_corpus(cfg)["train"]


def _structure(enc, params, noise_seed):
    result = extract(enc, params, rng=np.random.default_rng(noise_seed), sample=True)[0]
    argmax = tuple((enc.claim_vecs @ params.values["proj"].T
                    @ (enc.doc_vecs @ params.values["proj"].T).T).argmax(axis=0))
    return (tuple(np.flatnonzero(result.mask.values > 0)), result.extras.get("signature"), argmax)


def check_end_to_end(inst, kind, rng, dim=16, per_tensor=12, noise_seed=0):
    """Full-loss gradient check through verifiers, relaxation and score head."""
    cfg = ModelConfig(extractor=kind, dim=dim, budget_k=3, verifier="both", calib_w_init=6.0,
                      calib_b_init=-0.3, pair_init=0.4)
    params = init_params(cfg, rng)
    params.values["proj"] += rng.normal(0, 0.05, size=(dim, dim))
    enc = encode_instance(inst, dim=dim, seed=0)

    def loss():
        r = np.random.default_rng(noise_seed)
        return instance_forward_backward(enc, params, rng=r, train=True, backward=False)[0].loss

    params.zero_grad()
    _, d_docs = instance_forward_backward(enc, params, rng=np.random.default_rng(noise_seed), train=True,
                                          want_inputs=True)
    base = _structure(enc, params, noise_seed)

    def sig():
        return _structure(enc, params, noise_seed)

    targets = [(name, params.values[name], params.grads[name]) for name in params.values]
    targets.append(("doc_vecs", enc.doc_vecs, d_docs))
    err = 0.0
    for name, arr, grad in targets:
        if name == "pair_rho" and kind != "scale":
            continue
        for i in _sampled(arr.size, rng, per_tensor):
            if not _stable(sig, arr, i, base):
                return None
            err = max(err, _rel(_central(loss, arr, i), grad.flat[i]))
    return err


E2E_KINDS = ("scale", "fusedmax", "attention", "gumbel", "hardkuma")


def end_to_end_suite(cases, seed, kinds=E2E_KINDS):
    rng = np.random.default_rng([seed, 4])
    pool = iter(toy_instances(seed, 20 * cases + 20))
    worst, rejected, done = 0.0, 0, 0
    while done < cases:
        kind = kinds[done % len(kinds)]
        err = check_end_to_end(next(pool), kind, rng, noise_seed=int(rng.integers(1 << 30)))
        if err is None:
            rejected += 1
            continue
        worst = max(worst, err)
        done += 1
    return SuiteResult("end_to_end", done, rejected, worst)


def run_all(cases=50, seed=0, inject_bug=False):
    return [
        scale_suite(cases, seed, scale_bug=2.0 if inject_bug else 1.0),
        mlp_suite(cases, seed),
        graph_suite(cases, seed),
        end_to_end_suite(cases, seed),
    ]
