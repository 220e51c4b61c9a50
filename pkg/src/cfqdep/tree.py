"""Dependency tree value type shared by conversion, I/O, metrics and mining."""

from dataclasses import dataclass
from typing import Optional, Tuple

from .errors import TreeError

ROOT = -1

UD_LABELS = frozenset({
    "root", "nsubj", "obj", "obl", "nmod", "nmod:poss", "acl:relcl", "conj", "cc",
    "case", "cop", "aux", "det", "amod", "compound", "punct",
})

UNKNOWN_CATEGORY = "unknown"


@dataclass(frozen=True)
class DependencyTree:
    """Tokens with heads, relation labels and CFQ category labels.

    ``heads[i]`` is the 0-based index of token ``i``'s head, or ``ROOT``.
    """

    tokens: Tuple[str, ...]
    heads: Tuple[int, ...]
    labels: Tuple[str, ...]
    categories: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        object.__setattr__(self, "labels", tuple(self.labels))
        cats = self.categories
        if cats is None:
            cats = (UNKNOWN_CATEGORY,) * len(self.tokens)
        object.__setattr__(self, "categories", tuple(cats))
        n = len(self.tokens)
        if not (len(self.heads) == len(self.labels) == len(self.categories) == n):
            raise TreeError("tokens, heads, labels and categories differ in length")

    def __len__(self):
        return len(self.tokens)

    @property
    def root(self):
        roots = [i for i, h in enumerate(self.heads) if h == ROOT]
        return roots[0] if len(roots) == 1 else None

    def dependents(self, i):
        return [j for j, h in enumerate(self.heads) if h == i]

    def subtree_span(self, i):
        """(first, last) token index covered by the subtree of ``i``."""
        lo = hi = i
        stack = [i]
        children = self._children()
        while stack:
            k = stack.pop()
            lo, hi = min(lo, k), max(hi, k)
            stack.extend(children[k])
        return lo, hi

    def _children(self):
        children = [[] for _ in self.tokens]
        for j, h in enumerate(self.heads):
            if h != ROOT:
                children[h].append(j)
        return children

    def validate(self, label_inventory=None):
        """Raise :class:`TreeError` unless this is a single-rooted tree."""
        n = len(self)
        if n == 0:
            raise TreeError("empty tree")
        roots = [i for i, h in enumerate(self.heads) if h == ROOT]
        if len(roots) != 1:
            raise TreeError("expected exactly one root, found %d" % len(roots))
        if self.labels[roots[0]] != "root":
            raise TreeError("root token %d is labelled %r" % (roots[0], self.labels[roots[0]]))
        for i, h in enumerate(self.heads):
            if h != ROOT and not 0 <= h < n:
                raise TreeError("head of token %d out of range: %d" % (i, h))
            if h == i:
                raise TreeError("token %d is its own head" % i)
            if h != ROOT and self.labels[i] == "root":
                raise TreeError("non-root token %d labelled root" % i)
        for i in range(n):
            seen = set()
            k = i
            while k != ROOT:
                if k in seen:
                    raise TreeError("cycle through token %d" % i)
                seen.add(k)
                k = self.heads[k]
        if label_inventory is not None:
            bad = sorted(set(self.labels) - set(label_inventory))
            if bad:
                raise TreeError("labels outside inventory: %s" % ", ".join(bad))
        return self
