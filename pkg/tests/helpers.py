"""Random generators shared by the test modules."""

import random
from collections import defaultdict

from cfqdep.tree import ROOT, DependencyTree

LABELS = ("nsubj", "obj", "amod", "det", "case", "cc", "conj", "punct", "nmod:poss",
          "acl:relcl", "aux", "cop", "compound", "nmod", "mark", "clf")
CATEGORIES = ("verb", "noun", "entity", "role", "adjective", "of", "by", "'s", "and")


def random_heads(n, rng):
    """Heads of a random rooted tree over n tokens (not necessarily projective)."""
    order = list(range(n))
    rng.shuffle(order)
    heads = [ROOT] * n
    for k in range(1, n):
        heads[order[k]] = order[rng.randrange(k)]
    return heads


def random_projective_heads(n, rng):
    """Heads of a random projective tree: every subtree covers an interval."""
    heads = [ROOT] * n

    def build(lo, hi, parent):
        h = rng.randrange(lo, hi)
        heads[h] = parent
        for a, b in ((lo, h), (h + 1, hi)):
            if b <= a:
                continue
            cuts = sorted(rng.sample(range(a + 1, b), rng.randint(0, b - a - 1)))
            bounds = [a] + cuts + [b]
            for x, y in zip(bounds, bounds[1:]):
                build(x, y, h)

    build(0, n, ROOT)
    return heads


def random_tree(rng, max_tokens=10, labels=LABELS, categories=CATEGORIES, projective=False):
    n = rng.randint(1, max_tokens)
    heads = random_projective_heads(n, rng) if projective else random_heads(n, rng)
    labs = ["root" if h == ROOT else rng.choice(labels) for h in heads]
    cats = [rng.choice(categories) for _ in range(n)]
    return DependencyTree(tuple("w%d" % i for i in range(n)), tuple(heads), tuple(labs),
                          tuple(cats))


def perturb(tree, rng, p=0.3):
    """A prediction derived from ``tree``: some heads and labels changed."""
    n = len(tree)
    heads, labs = list(tree.heads), list(tree.labels)
    for i in range(n):
        if rng.random() < p:
            heads[i] = rng.choice([ROOT] + [j for j in range(n) if j != i])
        if rng.random() < p:
            labs[i] = rng.choice(LABELS + ("root",))
    return DependencyTree(tree.tokens, tuple(heads), tuple(labs), tree.categories)


class SentenceGenerator:
    """Draw random token sequences from a grammar plus lexicon.

    Past ``max_depth`` every nonterminal takes its shallowest production, so
    generation always terminates.
    """

    def __init__(self, grammar, lexicon, seed=0, max_depth=7):
        self.grammar = grammar
        self.rng = random.Random(seed)
        self.max_depth = max_depth
        self.words = defaultdict(list)
        for tok, cats in sorted(lexicon.entries.items()):
            for cat in cats:
                self.words[cat].append(tok)
        for tok, by_cat in sorted(grammar.lexical_index.items()):
            for cat in by_cat:
                self.words[cat].append(tok)
        self.height = self._heights()

    def _heights(self):
        h = {sym: 1 for sym in self.words}
        changed = True
        while changed:
            changed = False
            for p in self.grammar.structural:
                sub = [0 if i in p.terminals else h.get(s) for i, s in enumerate(p.rhs)]
                if None in sub:
                    continue
                val = 1 + max(sub)
                if val < h.get(p.lhs, float("inf")):
                    h[p.lhs] = val
                    changed = True
        return h

    def _prod_height(self, p):
        return max(0 if i in p.terminals else self.height[s] for i, s in enumerate(p.rhs))

    def expand(self, sym, depth=0):
        prods = [self.grammar.structural[i] for i in self.grammar.by_lhs.get(sym, ())]
        if self.words.get(sym) and (not prods or self.rng.random() < 0.5 or depth > self.max_depth):
            return [self.rng.choice(self.words[sym])]
        if depth > self.max_depth:
            best = min(self._prod_height(p) for p in prods)
            prods = [p for p in prods if self._prod_height(p) == best]
        p = self.rng.choice(prods)
        out = []
        for i, s in enumerate(p.rhs):
            out.extend([s] if i in p.terminals else self.expand(s, depth + 1))
        return out

    def sentence(self):
        return self.expand(self.grammar.start_symbol)
