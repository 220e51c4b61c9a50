"""Sparse logistic model of parser failure over construction features.

Each test sentence contributes one row per prediction run, labelled 1 when
every content arc of that run is right. Identical feature rows are folded
into (sentence, number of correct runs) pairs, which leaves the mean
logistic loss unchanged and keeps the optimizer cost independent of the run
count.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import sparse

from . import constructions as cx
from . import metrics
from .errors import AlignmentError, ConfigurationError, DegenerateFitError

logger = logging.getLogger(__name__)

FLAG_THRESHOLD = -1.0
DEFAULT_REG = 0.01


@dataclass
class FeatureMatrix:
    """Binary construction presence per sentence and correctness per run.

    ``X`` is (sentences x signatures); ``labels`` is (sentences x runs).
    :meth:`rows` expands to one row per (sentence, run).
    """

    sent_ids: List[str]
    signatures: List[str]
    X: sparse.csr_matrix
    labels: np.ndarray

    @property
    def n_runs(self):
        return self.labels.shape[1]

    def rows(self):
        index = np.repeat(np.arange(self.X.shape[0]), self.n_runs)
        return self.X[index], self.labels.reshape(-1)

    def column(self, sig):
        return self.signatures.index(sig)


def build_features(gold, runs, functional_labels=metrics.FUNCTIONAL_LABELS):
    """Features from gold-tree constructions; labels from each run's WSCLAS flag."""
    if not runs:
        raise ConfigurationError("no prediction runs")
    per_run = []
    for run in runs:
        report = metrics.evaluate(gold, run, functional_labels)
        per_run.append([s.whole_sentence_content_correct for s in report.sentences])
    sigsets = [cx.sentence_signatures(t) for t in gold.trees]
    signatures = sorted(set().union(*sigsets)) if sigsets else []
    col = {s: j for j, s in enumerate(signatures)}
    indptr, indices = [0], []
    for sigs in sigsets:
        indices.extend(sorted(col[s] for s in sigs))
        indptr.append(len(indices))
    X = sparse.csr_matrix((np.ones(len(indices)), indices, indptr),
                          shape=(len(sigsets), len(signatures)))
    labels = np.array(per_run, dtype=float).T.reshape(len(sigsets), len(runs))
    return FeatureMatrix([str(i) for i in gold.ids], signatures, X, labels)


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_objective(X, positives, trials, w, b, reg):
    """Mean logistic loss over expanded rows plus ``reg * ||w||_1``."""
    z = X @ w + b
    loss = positives * _softplus(-z) + (trials - positives) * _softplus(z)
    return float(loss.sum() / trials.sum() + reg * np.abs(w).sum())


def smooth_gradient(X, positives, trials, w, b):
    z = X @ w + b
    resid = (trials * _sigmoid(z) - positives) / trials.sum()
    return X.T @ resid, float(resid.sum())


def _soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def proximal_l1_logistic(X, positives, trials, reg, tol=1e-10, max_iter=100000):
    """Accelerated proximal gradient with backtracking and adaptive restart.

    Row ``s`` of ``X`` stands for ``trials[s]`` identical rows, ``positives[s]``
    of them labelled 1. Stops once the proximal-gradient mapping falls below
    ``tol`` in max-norm, which bounds the KKT residual of every coefficient.
    Returns ``(w, b, objective, iterations)``.
    """
    X = sparse.csr_matrix(X, dtype=float)
    positives = np.asarray(positives, dtype=float)
    trials = np.asarray(trials, dtype=float)
    total = trials.sum()
    p = X.shape[1]

    def smooth(w_, b_):
        z = X @ w_ + b_
        return float((positives * _softplus(-z) + (trials - positives) * _softplus(z)).sum()
                     / total)

    def prox_step(yw, yb, step):
        gw, gb = smooth_gradient(X, positives, trials, yw, yb)
        fy = smooth(yw, yb)
        while True:
            nw = _soft_threshold(yw - step * gw, step * reg)
            nb = yb - step * gb
            dw, db = nw - yw, nb - yb
            bound = fy + gw @ dw + gb * db + (dw @ dw + db * db) / (2 * step)
            if smooth(nw, nb) <= bound + 1e-15 * max(1.0, abs(fy)):
                return nw, nb, step
            step *= 0.5

    row_sq = np.asarray(X.multiply(X).sum(axis=1)).ravel() + 1.0
    step = 4.0 * total / max(float(trials @ row_sq), 1e-12)
    w, b = np.zeros(p), 0.0
    yw, yb = w, b
    obj = smooth(w, b)
    t = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        nw, nb, step = prox_step(yw, yb, step)
        new_obj = smooth(nw, nb) + reg * np.abs(nw).sum()
        if new_obj > obj:
            t = 1.0
            yw, yb = w, b
            nw, nb, step = prox_step(yw, yb, step)
            new_obj = smooth(nw, nb) + reg * np.abs(nw).sum()
        gap = max(np.max(np.abs(nw - yw), initial=0.0), abs(nb - yb)) / step
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        beta = (t - 1) / t_next
        yw, yb = nw + beta * (nw - w), nb + beta * (nb - b)
        w, b, obj, t = nw, nb, new_obj, t_next
        if gap <= tol:
            break
        step *= 1.1
    return w, b, obj, it


def kkt_residual(X, positives, trials, w, b, reg):
    """Largest violation of the L1 optimality conditions."""
    gw, gb = smooth_gradient(sparse.csr_matrix(X), np.asarray(positives, float),
                             np.asarray(trials, float), w, b)
    worst = abs(gb)
    for g, v in zip(gw, w):
        if v == 0:
            worst = max(worst, abs(g) - reg)
        else:
            worst = max(worst, abs(g + reg * math.copysign(1.0, v)))
    return max(worst, 0.0)


@dataclass
class LogisticFit:
    coefficients: Dict[str, float]
    intercept: float
    reg_strength: float
    seed: int
    train_index: List[int] = field(default_factory=list)
    heldout_index: List[int] = field(default_factory=list)
    heldout_accuracy: Optional[float] = None
    objective: Optional[float] = None
    iterations: int = 0

    def to_json(self):
        return {"intercept": self.intercept, "coefficients": dict(self.coefficients),
                "reg_strength": self.reg_strength, "seed": self.seed,
                "heldout_accuracy": self.heldout_accuracy, "objective": self.objective,
                "iterations": self.iterations}


def _degenerate_intercept(rate, tol):
    rate = min(max(rate, tol), 1 - tol)
    return math.log(rate / (1 - rate))


def fit_l1_logistic(m, reg_strength=DEFAULT_REG, split_fraction=0.9, seed=0, tol=1e-10,
                    max_iter=100000):
    """Fit on a sentence-level split; report accuracy on the held-out sentences."""
    n = m.X.shape[0]
    if n < 2:
        raise ValueError("need at least two sentences")
    order = np.random.default_rng(seed).permutation(n)
    n_train = max(1, min(n, int(math.floor(split_fraction * n))))
    train_idx = sorted(int(i) for i in order[:n_train])
    held_idx = sorted(int(i) for i in order[n_train:])
    X = m.X[train_idx]
    positives = m.labels[train_idx].sum(axis=1)
    trials = np.full(len(train_idx), float(m.n_runs))
    rate = positives.sum() / trials.sum()
    if rate in (0.0, 1.0):
        fallback = LogisticFit({s: 0.0 for s in m.signatures},
                               _degenerate_intercept(rate, 1e-8), reg_strength, seed,
                               train_idx, held_idx)
        raise DegenerateFitError("training labels are all %d" % int(rate), fallback)
    w, b, obj, iters = proximal_l1_logistic(X, positives, trials, reg_strength, tol, max_iter)
    accuracy = None
    if held_idx:
        z = m.X[held_idx] @ w + b
        pred = (z >= 0).astype(float)[:, None]
        accuracy = float((pred == m.labels[held_idx]).mean())
    coefficients = {s: float(v) + 0.0 for s, v in zip(m.signatures, w)}  # no -0.0
    return LogisticFit(coefficients, float(b), reg_strength, seed, train_idx, held_idx,
                       accuracy, obj, iters)


def flag_constructions(fit, threshold=FLAG_THRESHOLD):
    """Signatures with coefficient <= ``threshold``, most negative first."""
    flagged = [(v, s) for s, v in fit.coefficients.items() if v <= threshold]
    return [s for v, s in sorted(flagged)]


def _containing(sigsets, signature_set):
    return [i for i, sigs in enumerate(sigsets) if sigs & signature_set]


def _mean_wsclas(gold, runs):
    return float(np.mean([metrics.evaluate(gold, r).wsclas for r in runs]))


def _restrict(doc, keep_ids):
    keep = set(keep_ids)
    return type(doc)([s for s in doc.sentences if s.sent_id in keep])


def _drop(gold, runs, positions):
    remove = set(positions)
    kept = [i for i in range(len(gold)) if i not in remove]
    pairs = [metrics.align(gold, r) for r in runs]
    g = gold.subset(kept)
    rs = [type(r)([pair[i][1] for i in kept]) for r, pair in zip(runs, pairs)]
    return g, rs


def removal_delta(gold, runs, construction, sigsets=None):
    """Change in mean WSCLAS when sentences containing ``construction`` are removed."""
    if sigsets is None:
        sigsets = [cx.sentence_signatures(t) for t in gold.trees]
    hits = _containing(sigsets, {construction})
    if not hits:
        logger.warning("construction %s occurs in no sentence", construction)
        return 0.0
    if len(hits) == len(gold):
        raise ValueError("construction %s occurs in every sentence" % construction)
    g, rs = _drop(gold, runs, hits)
    return _mean_wsclas(g, rs) - _mean_wsclas(gold, runs)


@dataclass
class RemovalReport:
    flagged: List[str]
    sentences_remaining: int
    sentences_removed: int
    run_reports: List[metrics.EvalReport]
    deltas: Dict[str, float] = field(default_factory=dict)
    test_counts: Dict[str, int] = field(default_factory=dict)
    train_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def aggregate(self):
        return metrics.aggregate_runs(self.run_reports)

    def to_json(self):
        agg = self.aggregate
        return {
            "num_trees_removed": len(self.flagged),
            "sentences_in_reduced_test": self.sentences_remaining,
            "num_sentences_removed": self.sentences_removed,
            "wsclas": {"mean": agg.mean("wsclas"), "sd": agg.sd("wsclas")},
            "clas": {"mean": agg.mean("clas"), "sd": agg.sd("clas")},
            "las": {"mean": agg.mean("las"), "sd": agg.sd("las")},
            "constructions": [
                {"signature": s, "train_count": self.train_counts.get(s),
                 "test_count": self.test_counts.get(s), "delta": self.deltas.get(s)}
                for s in self.flagged],
        }


def reduced_test_report(gold, runs, flagged, train_inventory=None):
    """Scores on the sentences containing none of ``flagged``."""
    flagged = list(flagged)
    sigsets = [cx.sentence_signatures(t) for t in gold.trees] if flagged else []
    hits = _containing(sigsets, set(flagged)) if flagged else []
    if hits and len(hits) == len(gold):
        raise ValueError("every test sentence contains a flagged construction")
    if hits:
        g, rs = _drop(gold, runs, hits)
    else:
        g, rs = gold, runs
    reports = [metrics.evaluate(g, r) for r in rs]
    test_inv = cx.inventory(gold.trees) if flagged else None
    return RemovalReport(
        flagged, len(g), len(hits), reports,
        deltas={s: removal_delta(gold, runs, s, sigsets) for s in flagged},
        test_counts={s: test_inv[s] for s in flagged} if flagged else {},
        train_counts={s: train_inventory[s] for s in flagged} if train_inventory else {},
    )


@dataclass
class Crosstab:
    """``cells[i][j]``: % of sentences right in ``i`` dependency and ``j`` semantic runs."""

    cells: np.ndarray
    n_sentences: int

    def to_json(self):
        return {"cells": self.cells.tolist(), "n_sentences": self.n_sentences,
                "rows": "dependency runs correct", "columns": "semantic runs correct"}


def load_sem_correct(path):
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["sent_id"]] = int(row["correct_runs"])
    return out


def crosstab(gold, dep_runs, sem_correct, sem_runs=5):
    """Joint distribution of per-sentence correct-run counts for the two parsers."""
    n_dep = len(dep_runs)
    ids = [str(i) for i in gold.ids]
    missing = set(ids) ^ set(sem_correct)
    if missing:
        raise AlignmentError("sentence ids differ: %s" % ", ".join(sorted(missing)[:20]))
    correct = np.zeros(len(ids), dtype=int)
    for run in dep_runs:
        report = metrics.evaluate(gold, run)
        correct += np.array([s.whole_sentence_content_correct for s in report.sentences])
    cells = np.zeros((n_dep + 1, sem_runs + 1))
    for sid, k in zip(ids, correct):
        j = sem_correct[sid]
        if not 0 <= j <= sem_runs:
            raise ValueError("sentence %s: %d correct semantic runs" % (sid, j))
        cells[k, j] += 1
    if ids:
        cells *= 100.0 / len(ids)
    return Crosstab(cells, len(ids))
