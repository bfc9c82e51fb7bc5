"""Clustering scores against ground truth.

Pixels whose true label is 0 are unlabeled and dropped before anything
is counted. OA, AA and kappa are computed after relabeling predicted
clusters to classes by a maximum-agreement one-to-one assignment.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb

from .errors import InvalidInput

__all__ = [
    "ContingencyTable",
    "MetricReport",
    "contingency",
    "nmi",
    "ari",
    "purity_entropy",
    "best_map",
    "oa_aa_kappa",
    "evaluate",
    "UNMATCHED",
]

UNMATCHED = -1


@dataclass
class ContingencyTable:
    counts: np.ndarray  # (k_pred, k_true)
    pred_labels: np.ndarray
    true_labels: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def pred_sizes(self):
        return self.counts.sum(axis=1)

    @property
    def true_sizes(self):
        return self.counts.sum(axis=0)


def _labeled(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise InvalidInput(f"length mismatch: {pred.size} predictions, {truth.size} labels")
    keep = truth != 0
    if not keep.any():
        raise InvalidInput("no labeled (nonzero) ground-truth entries")
    return pred[keep], truth[keep]


def contingency(pred, truth):
    pred, truth = _labeled(pred, truth)
    pl, pi = np.unique(pred, return_inverse=True)
    tl, ti = np.unique(truth, return_inverse=True)
    counts = np.zeros((pl.size, tl.size), dtype=np.int64)
    np.add.at(counts, (pi, ti), 1)
    return ContingencyTable(counts, pl, tl)


def _entropy(sizes):
    p = sizes[sizes > 0] / sizes.sum()
    return float(-(p * np.log(p)).sum())


def _same_partition(counts):
    nz = counts > 0
    return bool((nz.sum(axis=0) == 1).all() and (nz.sum(axis=1) == 1).all())


def nmi(pred, truth, average="geometric"):
    """Mutual information over the geometric (or arithmetic) mean entropy, in nats."""
    t = contingency(pred, truth)
    n = t.n
    h_pred, h_true = _entropy(t.pred_sizes), _entropy(t.true_sizes)
    if h_pred == 0.0 or h_true == 0.0:
        # two single-cluster partitions are identical; one alone carries no information
        return 1.0 if h_pred == h_true else 0.0
    P = t.counts / n
    outer = np.outer(t.pred_sizes, t.true_sizes) / n ** 2
    nz = P > 0
    mi = float((P[nz] * np.log(P[nz] / outer[nz])).sum())
    if average == "geometric":
        norm = np.sqrt(h_pred * h_true)
    elif average == "arithmetic":
        norm = 0.5 * (h_pred + h_true)
    else:
        raise InvalidInput(f"unknown NMI average {average!r}")
    return float(min(max(mi / norm, 0.0), 1.0))


def ari(pred, truth):
    """Adjusted Rand index (Hubert-Arabie)."""
    t = contingency(pred, truth)
    index = comb(t.counts, 2).sum()
    a = comb(t.pred_sizes, 2).sum()
    b = comb(t.true_sizes, 2).sum()
    expected = a * b / comb(t.n, 2) if t.n > 1 else 0.0
    max_index = 0.5 * (a + b)
    if max_index == expected:
        return 1.0 if _same_partition(t.counts) else 0.0
    return float((index - expected) / (max_index - expected))


def purity_entropy(pred, truth):
    """Purity and class entropy within predicted clusters.

    Entropy is the size-weighted base-2 entropy of true classes inside
    each predicted cluster, divided by ``log2(k_true)`` so it lies in
    [0, 1]; lower is better. It is 0 when there is a single true class.
    """
    t = contingency(pred, truth)
    n = t.n
    purity = t.counts.max(axis=1).sum() / n
    k_true = t.counts.shape[1]
    if k_true < 2:
        return float(purity), 0.0
    ent = 0.0
    for row in t.counts:
        ni = row.sum()
        p = row[row > 0] / ni
        ent += (ni / n) * float(-(p * np.log2(p)).sum())
    return float(purity), float(ent / np.log2(k_true))


def best_map(pred, truth):
    """Hungarian assignment of predicted clusters to true classes.

    Returns a dict ``{pred_label: true_label}``; clusters left without a
    partner map to ``UNMATCHED`` and count as wrong everywhere.
    """
    t = contingency(pred, truth)
    rows, cols = linear_sum_assignment(t.counts, maximize=True)
    mapping = {int(p): UNMATCHED for p in t.pred_labels}
    for r, c in zip(rows, cols):
        mapping[int(t.pred_labels[r])] = int(t.true_labels[c])
    return mapping


def _confusion(pred, truth, mapping):
    pred, truth = _labeled(pred, truth)
    classes = np.unique(truth)
    mapped = np.array([mapping.get(int(p), UNMATCHED) for p in pred])
    pos = {int(c): i for i, c in enumerate(classes)}
    k = classes.size
    # last column collects predictions that match no class
    conf = np.zeros((k, k + 1), dtype=np.int64)
    for tr, pr in zip(truth.tolist(), mapped.tolist()):
        conf[pos[tr], pos.get(pr, k)] += 1
    return conf


def oa_aa_kappa(pred, truth, mapping=None):
    """Overall accuracy, mean per-class recall and Cohen's kappa after mapping."""
    if mapping is None:
        mapping = best_map(pred, truth)
    conf = _confusion(pred, truth, mapping)
    n = conf.sum()
    k = conf.shape[0]
    correct = np.trace(conf[:, :k])
    oa = correct / n
    aa = float(np.mean(np.diag(conf[:, :k]) / conf.sum(axis=1)))
    pe = float((conf.sum(axis=1) * conf.sum(axis=0)[:k]).sum()) / n ** 2
    if pe == 1.0:
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        kappa = (oa - pe) / (1.0 - pe)
    return float(oa), aa, float(kappa)


@dataclass
class MetricReport:
    nmi: float
    ari: float
    purity: float
    entropy: float
    oa: float
    aa: float
    kappa: float
    mapping: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["mapping"] = {str(k): v for k, v in self.mapping.items()}
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def evaluate(pred, truth, nmi_average="geometric"):
    """All seven scores at once."""
    mapping = best_map(pred, truth)
    purity, entropy = purity_entropy(pred, truth)
    oa, aa, kappa = oa_aa_kappa(pred, truth, mapping)
    return MetricReport(
        nmi=nmi(pred, truth, nmi_average),
        ari=ari(pred, truth),
        purity=purity,
        entropy=entropy,
        oa=oa,
        aa=aa,
        kappa=kappa,
        mapping=mapping,
    )
