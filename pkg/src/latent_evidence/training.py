"""Joint end-to-end training, Adam, plateau learning-rate halving and the
pairwise hinge ranker used by the hybrid extractor."""

import csv
import io
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .differentiable import MovingAverageBaseline
from .errors import ConfigurationError, DimensionError, NumericalError
from .evaluation import evaluate
from .extractors import PIPELINE_KINDS, hybrid_features
from .model import ModelConfig, encode_all, init_params, instance_forward_backward

REPORT_HEADER = ("epoch", "train_loss", "dev_loss", "dev_macro_f1", "dev_evidence_f1",
                 "dev_mean_selected", "learning_rate")

_EXTRACTOR_PARAMS = ("proj", "calib_w", "calib_b", "pair_rho")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; ``model`` fields are forwarded to ModelConfig.

    The config file format is flat ``key = value`` lines; ``#`` starts a
    comment. Keys are the field names of TrainConfig and ModelConfig.
    """

    learning_rate: float = 1e-3
    decay: float = 0.5
    patience: int = 2
    batch_size: int = 8
    epochs: int = 8
    seed: int = 0
    freeze_r: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    baseline_momentum: float = 0.95
    ranker_epochs: int = 5
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 < self.decay <= 1:
            raise ConfigurationError("learning_rate must be >= 0 and decay in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise ConfigurationError("batch_size and patience must be >= 1, epochs >= 0")

    @classmethod
    def from_mapping(cls, mapping):
        own = {f.name: f for f in fields(cls) if f.name != "model"}
        model = {f.name: f for f in fields(ModelConfig)}
        kw, mkw = {}, {}
        for key, raw in mapping.items():
            if key in own:
                kw[key] = _coerce(raw, own[key].type, key)
            elif key in model:
                mkw[key] = _coerce(raw, model[key].type, key)
            else:
                raise ConfigurationError(f"unknown config key {key!r}")
        return cls(model=ModelConfig(**mkw), **kw)

    @classmethod
    def from_file(cls, path, overrides=None):
        mapping = parse_config_text(open(path, encoding="utf-8").read())
        mapping.update(overrides or {})
        return cls.from_mapping(mapping)


def _coerce(raw, typ, key):
    if not isinstance(raw, str):
        return raw
    name = typ if isinstance(typ, str) else typ.__name__
    try:
        if name == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if name == "int":
            return int(raw)
        if name == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc
    return raw.strip()


def parse_config_text(text):
    out = {}
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {num} is not key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, skip=()):
    """One bias-corrected Adam update of the ``params`` dict in place."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, value in params.items():
        if name in skip:
            continue
        g = grads[name]
        if g.shape != value.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {value.shape} for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


class PlateauHalver:
    """Multiply the rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, lr, factor=0.5, patience=2):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.best = np.inf
        self.stale = 0
        self.events = 0

    def step(self, metric):
        if metric < self.best:
            self.best = metric
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr *= self.factor
                self.events += 1
                self.stale = 0
        return self.lr


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    dev_loss: list = field(default_factory=list)
    dev_macro_f1: list = field(default_factory=list)
    dev_evidence_f1: list = field(default_factory=list)
    dev_mean_selected: list = field(default_factory=list)
    learning_rate: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    def rows(self):
        return [(i + 1, self.train_loss[i], self.dev_loss[i], self.dev_macro_f1[i],
                 self.dev_evidence_f1[i], self.dev_mean_selected[i], self.learning_rate[i])
                for i in range(len(self.train_loss))]

    def to_csv(self):
        """'#v1' line, then REPORT_HEADER, one row per epoch (wall time excluded)."""
        buf = io.StringIO()
        buf.write("#v1\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in self.rows():
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
        return buf.getvalue()


def train_hybrid_ranker(encs, epochs=5, lr=0.05, l2=1e-4, negatives=8, seed=0):
    """Pairwise hinge-loss linear ranker: gold sentences should outrank the rest."""
    rng = np.random.default_rng(seed)
    pairs = []
    for enc in encs:
        if enc.gold is None:
            continue
        feats = hybrid_features(enc)
        gold = np.array(enc.gold, dtype=int)
        others = np.setdiff1d(np.arange(enc.n_sentences), gold)
        for g in gold:
            for n in rng.choice(others, size=min(negatives, others.size), replace=False):
                pairs.append(feats[g] - feats[n])
    if not pairs:
        raise ConfigurationError("hybrid ranker needs instances with gold evidence")
    diffs = np.array(pairs)
    return fit_pairwise_hinge(diffs, epochs=epochs, lr=lr, l2=l2, rng=rng)


def fit_pairwise_hinge(diffs, epochs=5, lr=0.05, l2=1e-4, rng=None):
    """SGD on ``mean(max(0, 1 - w . d)) + l2/2 ||w||^2`` over preference differences."""
    rng = rng or np.random.default_rng(0)
    w = np.zeros(diffs.shape[1])
    for _ in range(epochs):
        for i in rng.permutation(len(diffs)):
            d = diffs[i]
            w *= 1.0 - lr * l2
            if w @ d < 1.0:
                w += lr * d
    return w


def pairwise_accuracy(w, encs):
    hits = total = 0
    for enc in encs:
        if not enc.gold:
            continue
        s = hybrid_features(enc) @ w
        gold = np.zeros(enc.n_sentences, dtype=bool)
        gold[enc.gold] = True
        comp = s[gold][:, None] > s[~gold][None, :]
        hits += comp.sum()
        total += comp.size
    return hits / total if total else float("nan")


def _dev_pass(encs, params):
    losses = [instance_forward_backward(e, params, train=False, backward=False)[0].loss for e in encs]
    return float(np.mean(losses)) if losses else float("nan")


def joint_train(dataset, config, log=None):
    """Train extractor + verifier jointly on ``dataset['train']``.

    ``dataset`` maps split names to lists of ClaimInstance (or EncodedInstance).
    Each Adam step uses the mean loss of one minibatch. Pipeline extractors keep
    their fixed masks and only the verifier learns.
    """
    train = dataset.get("train") or []
    if not train:
        raise ConfigurationError("training split is empty")
    dev = dataset.get("dev") or []
    mcfg = config.model
    train = _encoded(train, mcfg)
    dev = _encoded(dev, mcfg)
    rng = np.random.default_rng(config.seed)
    params = init_params(mcfg, rng)
    if mcfg.extractor == "hybrid":
        params.extras["hybrid_weights"] = train_hybrid_ranker(
            train, epochs=config.ranker_epochs, seed=config.seed).tolist()

    skip = set(_EXTRACTOR_PARAMS) if mcfg.extractor in PIPELINE_KINDS else set()
    if config.freeze_r or not (mcfg.use_pair and mcfg.extractor == "scale"):
        skip.add("pair_rho")
    for head in ("mlp", "graph"):
        if head not in mcfg.heads:
            skip.update(k for k in params.values if k.startswith(head + "."))

    state = AdamState()
    sched = PlateauHalver(config.learning_rate, config.decay, config.patience)
    baseline = MovingAverageBaseline(config.baseline_momentum)
    report = TrainReport()
    for epoch in range(config.epochs):
        start = time.perf_counter()
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        for b in range(0, len(order), config.batch_size):
            batch = order[b:b + config.batch_size]
            params.zero_grad()
            batch_loss = 0.0
            for idx in batch:
                fwd, _ = instance_forward_backward(train[idx], params, rng=rng, train=True, baseline=baseline)
                if not np.isfinite(fwd.loss):
                    raise NumericalError(f"non-finite loss at epoch {epoch + 1} on {train[idx].instance.id}")
                batch_loss += fwd.loss
            for g in params.grads.values():
                g /= len(batch)
            adam_step(params.values, params.grads, state, sched.lr,
                      config.beta1, config.beta2, config.eps, skip=skip)
            epoch_loss += batch_loss
        report.train_loss.append(epoch_loss / len(train))
        report.learning_rate.append(sched.lr)
        if dev:
            dev_loss = _dev_pass(dev, params)
            rep = evaluate(dev, params)
            report.dev_loss.append(dev_loss)
            report.dev_macro_f1.append(rep.macro_f1)
            report.dev_evidence_f1.append(rep.evidence_f1)
            report.dev_mean_selected.append(rep.mean_selected)
            sched.step(dev_loss)
        else:
            for lst in (report.dev_loss, report.dev_macro_f1, report.dev_evidence_f1, report.dev_mean_selected):
                lst.append(float("nan"))
            sched.step(report.train_loss[-1])
        report.wall_time.append(time.perf_counter() - start)
        if log is not None:
            log(f"epoch {epoch + 1}: loss {report.train_loss[-1]:.4f} dev_f1 {report.dev_macro_f1[-1]:.4f} "
                f"ev_f1 {report.dev_evidence_f1[-1]:.4f} ({report.wall_time[-1]:.1f}s)")
    params.zero_grad()
    return params, report


def _encoded(items, mcfg):
    if items and hasattr(items[0], "doc_vecs"):
        return list(items)
    return encode_all(items, mcfg)
