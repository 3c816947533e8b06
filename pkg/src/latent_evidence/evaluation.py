"""Evaluation harness: metrics reports, budget sweeps and their CSV forms."""

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .corpus import LABELS
from .errors import ConfigurationError
from .io import atomic_write_text
from .metrics import contiguity_runs, evidence_prf, macro_f1, per_label_f1
from .model import ModelParams, _verify, extract

FORMAT_TAG = "#v1"
LABEL_COLUMNS = tuple("f1_" + name.lower().replace(" ", "_") for name in LABELS)
METRICS_HEADER = (
    ("extractor", "verifier", "n", "macro_f1") + LABEL_COLUMNS
    + ("evidence_precision", "evidence_recall", "evidence_f1", "mean_selected", "mean_runs")
)
SWEEP_HEADER = ("k", "macro_f1", "evidence_f1", "mean_selected", "mean_runs")


@dataclass(frozen=True)
class MetricsReport:
    extractor: str
    verifier: str
    n: int
    macro_f1: float
    per_label_f1: tuple
    evidence_precision: float
    evidence_recall: float
    evidence_f1: float
    mean_selected: float
    mean_runs: float

    def row(self):
        return ((self.extractor, self.verifier, self.n, self.macro_f1) + tuple(self.per_label_f1)
                + (self.evidence_precision, self.evidence_recall, self.evidence_f1,
                   self.mean_selected, self.mean_runs))


def _pick_head(params, verifier):
    heads = params.config.heads
    if verifier is None:
        return heads[0]
    if verifier not in heads:
        raise ConfigurationError(f"checkpoint has no {verifier!r} verifier (trained heads: {', '.join(heads)})")
    return verifier


def predict(encs, params, verifier=None, zero_mask=False):
    """Deterministic predictions: ``(labels, results)`` for each encoded instance."""
    head = _pick_head(params, verifier)
    labels, results = [], []
    for enc in encs:
        result = extract(enc, params, sample=False)[0]
        mu = np.zeros(enc.n_sentences) if zero_mask else result.mask.values
        labels.append(int(np.argmax(_verify(enc, params, head, mu).probs)))
        results.append(result)
    return labels, results


def _indicator(indices, n):
    out = np.zeros(n)
    out[list(indices)] = 1.0
    return out


def evaluate(encs, params, verifier=None, zero_mask=False):
    """Verdict macro-F1 plus evidence P/R/F1 (averaged over instances with gold)."""
    if not encs:
        raise ConfigurationError("cannot evaluate an empty dataset")
    head = _pick_head(params, verifier)
    labels, results = predict(encs, params, head, zero_mask=zero_mask)
    golds = [enc.label for enc in encs]
    prf = [evidence_prf(res.selected_indices, enc.gold) for enc, res in zip(encs, results)
           if enc.gold is not None]
    prf = np.array(prf) if prf else np.zeros((1, 3))
    return MetricsReport(
        extractor=params.config.extractor,
        verifier=head,
        n=len(encs),
        macro_f1=macro_f1(labels, golds),
        per_label_f1=tuple(float(x) for x in per_label_f1(labels, golds)),
        evidence_precision=float(prf[:, 0].mean()),
        evidence_recall=float(prf[:, 1].mean()),
        evidence_f1=float(prf[:, 2].mean()),
        mean_selected=float(np.mean([len(r.selected_indices) for r in results])),
        mean_runs=float(np.mean([contiguity_runs(_indicator(r.selected_indices, enc.n_sentences), enc.boundaries)
                                 for r, enc in zip(results, encs)])),
    )


def with_k(params, k):
    """Copy of ``params`` whose budget (SCALE) or top-k / N (pipeline) is ``k``."""
    cfg = params.config
    if cfg.extractor == "scale":
        new = replace(cfg, budget_k=k)
    elif cfg.extractor in ("surface", "semantic", "hybrid"):
        new = replace(cfg, top_k=k)
    elif cfg.extractor == "rule":
        new = replace(cfg, rule_n=k)
    else:
        raise ConfigurationError(f"budget sweep is undefined for the {cfg.extractor!r} extractor")
    out = ModelParams(params.values, new, params.extras)
    return out


def budget_sweep(encs, params, k_values, verifier=None):
    """Re-solve a trained model at each K. Returns (rows, claim_only_macro_f1)."""
    rows = []
    for k in k_values:
        rep = evaluate(encs, with_k(params, int(k)), verifier)
        rows.append((int(k), rep.macro_f1, rep.evidence_f1, rep.mean_selected, rep.mean_runs))
    claim_only = evaluate(encs, params, verifier, zero_mask=True).macro_f1
    return rows, claim_only


def _csv_text(header, rows):
    buf = io.StringIO()
    buf.write(FORMAT_TAG + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def metrics_csv(reports):
    return _csv_text(METRICS_HEADER, [r.row() for r in reports])


def sweep_csv(rows):
    return _csv_text(SWEEP_HEADER, rows)


def write_csv(path, text):
    atomic_write_text(path, text)


def read_csv(path):
    """Parse a '#v1' CSV into ``(header, rows)`` with string cells."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(FORMAT_TAG):
        raise ConfigurationError("CSV is missing the '#v1' header line")
    reader = csv.reader(lines[1:])
    header = next(reader)
    return tuple(header), [row for row in reader]

