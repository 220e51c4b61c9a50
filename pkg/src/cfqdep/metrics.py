"""LAS, CLAS and whole-sentence CLAS (WSCLAS) with multi-run aggregation.

Scores are micro-averaged over arcs, as in the CoNLL 2018 shared-task
evaluation. A token is a content word when its *gold* relation, with any
subtype stripped, is not one of the functional relations.
"""

import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import AlignmentError

FUNCTIONAL_LABELS = frozenset({"aux", "case", "cc", "cop", "det", "punct", "mark", "clf"})

METRICS = ("las", "clas", "wsclas")


def universal(label):
    return label.split(":", 1)[0]


@dataclass(frozen=True)
class SentenceScore:
    las_correct: int
    las_total: int
    clas_correct: int
    clas_total: int
    sent_id: Optional[str] = None

    @property
    def whole_sentence_content_correct(self):
        # sentences without content arcs count as correct
        return self.clas_correct == self.clas_total


def _arc_match(gold, pred, i, ignore_subtypes):
    if gold.heads[i] != pred.heads[i]:
        return False
    if ignore_subtypes:
        return universal(gold.labels[i]) == universal(pred.labels[i])
    return gold.labels[i] == pred.labels[i]


def score_sentence(gold, pred, functional_labels=FUNCTIONAL_LABELS, ignore_subtypes=False,
                   sent_id=None):
    if len(gold) != len(pred):
        raise AlignmentError("sentence %s: gold has %d tokens, prediction %d"
                             % (sent_id, len(gold), len(pred)))
    las = clas = content = 0
    for i in range(len(gold)):
        ok = _arc_match(gold, pred, i, ignore_subtypes)
        las += ok
        if universal(gold.labels[i]) not in functional_labels:
            content += 1
            clas += ok
    return SentenceScore(las, len(gold), clas, content, sent_id)


def _pct(num, den):
    return 100.0 * num / den if den else 100.0


@dataclass
class EvalReport:
    sentences: List[SentenceScore]
    label: str = ""

    @property
    def las(self):
        return _pct(sum(s.las_correct for s in self.sentences),
                    sum(s.las_total for s in self.sentences))

    @property
    def clas(self):
        return _pct(sum(s.clas_correct for s in self.sentences),
                    sum(s.clas_total for s in self.sentences))

    @property
    def wsclas(self):
        return _pct(sum(s.whole_sentence_content_correct for s in self.sentences),
                    len(self.sentences))

    def metric(self, name):
        return getattr(self, name)

    def to_json(self, per_sentence=True):
        out = {"label": self.label, "las": self.las, "clas": self.clas,
               "wsclas": self.wsclas, "sentences": len(self.sentences)}
        if per_sentence:
            out["per_sentence"] = [
                {"sent_id": s.sent_id, "las_correct": s.las_correct, "las_total": s.las_total,
                 "clas_correct": s.clas_correct, "clas_total": s.clas_total,
                 "whole_sentence_content_correct": s.whole_sentence_content_correct}
                for s in self.sentences]
        return out


def align(gold, pred):
    """Pair sentences by ``sent_id``, or by position when the prediction has none."""
    gold_ids, pred_ids = gold.ids, pred.ids
    if all(i is not None for i in pred_ids) and all(i is not None for i in gold_ids):
        missing = set(gold_ids) ^ set(pred_ids)
        if missing:
            raise AlignmentError("sentence ids differ: %s" % ", ".join(sorted(missing)[:20]))
        by_id = {s.sent_id: s for s in pred.sentences}
        return [(g, by_id[g.sent_id]) for g in gold.sentences]
    if len(gold) != len(pred):
        raise AlignmentError("gold has %d sentences, prediction %d" % (len(gold), len(pred)))
    return list(zip(gold.sentences, pred.sentences))


def evaluate(gold, pred, functional_labels=FUNCTIONAL_LABELS, ignore_subtypes=False, label=""):
    scores = [score_sentence(g.tree, p.tree, functional_labels, ignore_subtypes, g.sent_id)
              for g, p in align(gold, pred)]
    return EvalReport(scores, label)


@dataclass
class MultiRunReport:
    """Mean and sample standard deviation of each metric over runs."""

    runs: Dict[str, List[float]]
    labels: List[str] = field(default_factory=list)

    @property
    def n_runs(self):
        return len(next(iter(self.runs.values()), []))

    @property
    def single_run(self):
        return self.n_runs == 1

    def mean(self, metric):
        return statistics.fmean(self.runs[metric])

    def sd(self, metric):
        values = self.runs[metric]
        if len(values) < 2:
            return 0.0
        return statistics.stdev(values)

    def to_json(self):
        out = {m: {"mean": self.mean(m), "sd": self.sd(m), "runs": list(self.runs[m])}
               for m in self.runs}
        out["n_runs"] = self.n_runs
        out["single_run"] = self.single_run
        out["run_labels"] = list(self.labels)
        return out


def aggregate_runs(reports):
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    return MultiRunReport({m: [r.metric(m) for r in reports] for m in METRICS},
                          [r.label for r in reports])
