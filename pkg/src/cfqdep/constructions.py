"""Constituent-contiguous constructions mined from dependency trees.

A construction is a target token plus a subset of its immediate dependents,
with words replaced by category labels. Order the target and every
dependent's subtree by the subtree's first token; a subset qualifies when the
target and the chosen dependents form one unbroken run in that order. A
target with ``l`` dependents on its left and ``r`` on its right therefore
yields ``(l + 1) * (r + 1) - 1`` constructions.
"""

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Tuple
from urllib.parse import quote

from .errors import TreeError

LEFT, RIGHT = "L", "R"


@dataclass(frozen=True)
class Construction:
    target_category: str
    children: Tuple[Tuple[str, str, str], ...]  # (side, relation, category)
    target: int = field(default=-1, compare=False)
    child_indices: Tuple[int, ...] = field(default=(), compare=False)

    @property
    def complexity(self):
        return len(self.children)

    @property
    def signature(self):
        return signature(self)


_SAFE = "'?!.-_~*+$&;=<>/"


def _esc(text, extra=""):
    return quote(text, safe=_SAFE + extra)


def signature(c):
    """Canonical string, e.g. ``verb(cc:and@L, nmod:poss:entity@L)``.

    Relations keep their ``:`` subtype separator; categories escape it, so
    the last ``:`` of a child separates relation from category.
    """
    parts = ", ".join("%s:%s@%s" % (_esc(rel, ":"), _esc(cat), side)
                      for side, rel, cat in c.children)
    return "%s(%s)" % (_esc(c.target_category), parts)


def complexity_of(sig):
    inner = sig[sig.index("(") + 1:-1]
    return 0 if not inner else inner.count(", ") + 1


def _units(tree, target, children_of):
    """Target and its dependents in order of subtree start."""
    units = [(target, target)]
    for child in children_of[target]:
        units.append((tree.subtree_span(child)[0], child))
    units.sort()
    return [tok for _, tok in units]


def extract(tree):
    """All constructions of ``tree``, ordered by target then by run."""
    for i, cat in enumerate(tree.categories):
        if cat is None or cat == "":
            raise TreeError("token %d (%r) has no category" % (i, tree.tokens[i]))
    children_of = defaultdict(list)
    for j, h in enumerate(tree.heads):
        if h >= 0:
            children_of[h].append(j)
    out = []
    for target in range(len(tree)):
        if not children_of[target]:
            continue
        units = _units(tree, target, children_of)
        pos = units.index(target)
        for lo in range(pos, -1, -1):
            for hi in range(pos, len(units)):
                if lo == hi:
                    continue
                chosen = [u for u in units[lo:hi + 1] if u != target]
                out.append(Construction(
                    tree.categories[target],
                    tuple((LEFT if c < target else RIGHT, tree.labels[c], tree.categories[c])
                          for c in chosen),
                    target,
                    tuple(chosen),
                ))
    return out


def sentence_signatures(tree):
    return {c.signature for c in extract(tree)}


@dataclass
class ConstructionInventory:
    """Signature counts (every occurrence) plus per-complexity views."""

    counts: Counter = field(default_factory=Counter)

    def add_tree(self, tree):
        self.counts.update(c.signature for c in extract(tree))
        return self

    def merge(self, other):
        return ConstructionInventory(self.counts + other.counts)

    @property
    def total(self):
        return sum(self.counts.values())

    @property
    def unique(self):
        return len(self.counts)

    def complexities(self):
        return sorted({complexity_of(s) for s in self.counts})

    def by_complexity(self):
        parts = defaultdict(Counter)
        for sig, n in self.counts.items():
            parts[complexity_of(sig)][sig] = n
        return dict(sorted(parts.items()))

    def unique_by_complexity(self):
        return {k: len(v) for k, v in self.by_complexity().items()}

    def __contains__(self, sig):
        return sig in self.counts

    def __getitem__(self, sig):
        return self.counts.get(sig, 0)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["signature", "complexity", "count"])
        for sig, n in sorted(self.counts.items(), key=lambda kv: (complexity_of(kv[0]), kv[0])):
            writer.writerow([sig, complexity_of(sig), n])
        return buf.getvalue()

    def summary(self):
        return {"unique": self.unique, "total": self.total,
                "unique_by_complexity": {str(k): v for k, v in self.unique_by_complexity().items()}}


def inventory(trees):
    inv = ConstructionInventory()
    for tree in trees:
        inv.add_tree(tree)
    return inv
