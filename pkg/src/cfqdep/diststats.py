"""Test/train comparisons of construction distributions, and the score-vs-divergence fit."""

import math
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

NORMALIZATION_TOL = 1e-9
FEWSHOT_THRESHOLD = 4


@dataclass(frozen=True)
class Histogram:
    masses: Mapping[str, float]
    complexity: int = None
    normalized: bool = True

    @classmethod
    def from_counts(cls, counts, complexity=None):
        total = float(sum(counts.values()))
        if total <= 0:
            return cls({}, complexity, False)
        return cls({k: v / total for k, v in counts.items() if v}, complexity, True)

    def check(self):
        if any(v < 0 for v in self.masses.values()):
            raise ValueError("negative mass in histogram")
        if abs(sum(self.masses.values()) - 1.0) > NORMALIZATION_TOL:
            raise ValueError("histogram is not normalized (sum %.12g)" % sum(self.masses.values()))
        return self


def _as_masses(h):
    if isinstance(h, Histogram):
        h.check()
        return h.masses
    masses = dict(h)
    Histogram(masses).check()
    return masses


def js_distance(p, q, base=2.0):
    """Square root of the Jensen-Shannon divergence between two histograms.

    Keys missing from one side have mass 0. With ``base=2`` the result lies in
    ``[0, 1]``.
    """
    p, q = _as_masses(p), _as_masses(q)
    total = 0.0
    for key in set(p) | set(q):
        a, b = p.get(key, 0.0), q.get(key, 0.0)
        m = 0.5 * (a + b)
        if a > 0:
            total += a * math.log(a / m)
        if b > 0:
            total += b * math.log(b / m)
    divergence = max(total / 2.0 / math.log(base), 0.0)
    return math.sqrt(divergence)


def histograms(inv, weighting="token"):
    """Per-complexity normalized histograms from a construction inventory."""
    if weighting not in ("token", "type"):
        raise ValueError("weighting must be 'token' or 'type'")
    out = {}
    for k, counts in inv.by_complexity().items():
        if weighting == "type":
            counts = {s: 1 for s in counts}
        out[k] = Histogram.from_counts(counts, k)
    return out


def divergence_by_complexity(test_inv, train_inv, weighting="token", base=2.0):
    """JS distance per complexity present in either inventory."""
    test_h = histograms(test_inv, weighting)
    train_h = histograms(train_inv, weighting)
    curve = {}
    for k in sorted(set(test_h) | set(train_h)):
        a, b = test_h.get(k), train_h.get(k)
        if a is None or b is None:
            # one side has no support at this complexity: disjoint by definition
            curve[k] = 1.0 if base == 2.0 else math.sqrt(math.log(2) / math.log(base))
            continue
        curve[k] = js_distance(a, b, base)
    return curve


def _proportions(test_inv, train_inv, predicate, level):
    out = {}
    for k, counts in test_inv.by_complexity().items():
        if level == "type":
            hits = sum(1 for s in counts if predicate(train_inv[s]))
            out[k] = hits / len(counts)
        else:
            total = sum(counts.values())
            out[k] = sum(n for s, n in counts.items() if predicate(train_inv[s])) / total
    return out


def untrained_proportion(test_inv, train_inv, level="type"):
    """Fraction of test constructions per complexity never seen in train."""
    return _proportions(test_inv, train_inv, lambda n: n == 0, level)


def fewshot_proportion(test_inv, train_inv, threshold=FEWSHOT_THRESHOLD, level="type"):
    """Fraction of test constructions per complexity seen fewer than ``threshold`` times in train."""
    return _proportions(test_inv, train_inv, lambda n: n < threshold, level)


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    residuals: Tuple[float, ...]
    metric: str = ""

    def predict(self, x):
        return self.slope * x + self.intercept

    def to_json(self):
        return {"metric": self.metric, "slope": self.slope, "intercept": self.intercept,
                "residuals": list(self.residuals)}


def fit_divergence_regression(points, metric=""):
    """Ordinary least squares of score on compound divergence."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least two (divergence, score) points")
    x, y = pts[:, 0], pts[:, 1]
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 0 or len(set(x.tolist())) < 2:
        raise ValueError("divergence values have no variance")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    residuals = tuple(float(r) for r in y - (slope * x + intercept))
    return RegressionFit(slope, intercept, residuals, metric)
