"""CFQ context-free grammar, lexicon, tokenizer and chart parser.

The grammar file holds one production per line (``LHS -> RHS1 RHS2 ...``).
Bare symbols are nonterminals, quoted symbols are literal terminals matched
case-sensitively, ``#`` starts a comment and ``%open A B ...`` declares
open-class preterminals whose words come from a separate lexicon file
(``token<TAB>category[,category...]``).

Parsing uses an Earley recognizer followed by exhaustive extraction of every
derivation from the completed chart, so left recursion and rules longer than
two symbols need no grammar transformation.
"""

import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path
from typing import Dict, FrozenSet, Mapping, Optional, Tuple

from .errors import (
    AmbiguityError,
    GrammarError,
    GrammarValidationError,
    LexicalGapError,
    NoParseError,
    TokenizationError,
)

logger = logging.getLogger(__name__)

START_SYMBOL = "S"

_SYMBOL_RE = re.compile(r'"(?:[^"\\]|\\.)*"|\'(?:[^\'\\]|\\.)*\'|\S+')


@dataclass(frozen=True)
class Production:
    """A grammar rule. ``terminals`` holds the rhs positions that are literals."""

    lhs: str
    rhs: Tuple[str, ...]
    terminals: FrozenSet[int] = frozenset()
    rule_id: str = ""

    def __post_init__(self):
        if not self.rhs:
            raise GrammarError("production for %r has an empty right-hand side" % self.lhs)
        if not self.rule_id:
            object.__setattr__(self, "rule_id", self.render())

    def render(self):
        parts = ['"%s"' % s if i in self.terminals else s for i, s in enumerate(self.rhs)]
        return "%s -> %s" % (self.lhs, " ".join(parts))

    @property
    def is_lexical(self):
        return len(self.rhs) == 1 and 0 in self.terminals

    def __str__(self):
        return self.rule_id


def lexical_rule_id(category, token):
    return '%s -> "%s"' % (category, token)


class Grammar:
    """An immutable CFG with a designated start symbol."""

    def __init__(self, productions, preterminals=(), start_symbol=START_SYMBOL):
        self.productions = tuple(productions)
        self.start_symbol = start_symbol
        self.open_classes = frozenset(preterminals)
        lexical = [p for p in self.productions if p.is_lexical]
        self.structural = tuple(p for p in self.productions if not p.is_lexical)
        self.preterminals = self.open_classes | {p.lhs for p in lexical}
        self.nonterminals = frozenset(p.lhs for p in self.productions) | self.preterminals
        self.by_lhs: Dict[str, Tuple[int, ...]] = {}
        index = defaultdict(list)
        for i, p in enumerate(self.structural):
            index[p.lhs].append(i)
        self.by_lhs = {k: tuple(v) for k, v in index.items()}
        words = defaultdict(dict)
        for p in lexical:
            words[p.rhs[0]][p.lhs] = p.rule_id
        self.lexical_index: Mapping[str, Mapping[str, str]] = dict(words)
        self.literals = frozenset(
            p.rhs[i] for p in self.structural for i in p.terminals
        )

    def __len__(self):
        return len(self.productions)

    def __iter__(self):
        return iter(self.productions)

    def __repr__(self):
        return "Grammar(%d productions, start=%r)" % (len(self), self.start_symbol)

    def get(self, rule_id):
        for p in self.productions:
            if p.rule_id == rule_id:
                return p
        raise KeyError(rule_id)

    def validate(self):
        if not self.productions:
            raise GrammarValidationError("grammar is empty: no start symbol", self.start_symbol)
        if self.start_symbol not in {p.lhs for p in self.productions}:
            raise GrammarValidationError(
                "start symbol %r has no production" % self.start_symbol, self.start_symbol)
        seen = set()
        for p in self.productions:
            if p.rule_id in seen:
                raise GrammarValidationError("duplicate production %s" % p.rule_id)
            seen.add(p.rule_id)
            for i, sym in enumerate(p.rhs):
                if i not in p.terminals and sym not in self.nonterminals:
                    raise GrammarValidationError(
                        "undefined nonterminal %r in %s" % (sym, p.rule_id), sym)
        self._check_unary_cycles()
        return self

    def _check_unary_cycles(self):
        unary = defaultdict(set)
        for p in self.structural:
            if len(p.rhs) == 1 and not p.terminals:
                unary[p.lhs].add(p.rhs[0])

        def visit(sym, stack):
            for nxt in unary.get(sym, ()):
                if nxt in stack:
                    raise GrammarValidationError("unary cycle through %r" % nxt, nxt)
                visit(nxt, stack | {nxt})

        for sym in list(unary):
            visit(sym, {sym})


def _parse_symbol(text):
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1].encode().decode("unicode_escape"), True
    return text, False


def load_grammar(source, start_symbol=START_SYMBOL):
    """Parse grammar text into a validated :class:`Grammar`."""
    productions = []
    open_classes = set()
    for lineno, raw in enumerate(source.splitlines(), 1):
        symbols = []
        for tok in _SYMBOL_RE.findall(raw):
            if tok.startswith("#"):
                break
            symbols.append(tok)
        if not symbols:
            continue
        if symbols[0] == "%open":
            open_classes.update(symbols[1:])
            continue
        if symbols[0].startswith("%"):
            raise GrammarError("unknown directive %s" % symbols[0], lineno)
        if len(symbols) < 3 or symbols[1] != "->":
            raise GrammarError("expected 'LHS -> RHS ...', got %r" % raw.strip(), lineno)
        lhs, is_term = _parse_symbol(symbols[0])
        if is_term:
            raise GrammarError("left-hand side must be a nonterminal", lineno)
        rhs, terminals = [], set()
        for i, sym in enumerate(symbols[2:]):
            if sym == "->":
                raise GrammarError("more than one '->'", lineno)
            value, is_term = _parse_symbol(sym)
            if is_term:
                terminals.add(i)
            rhs.append(value)
        productions.append(Production(lhs, tuple(rhs), frozenset(terminals)))
    return Grammar(productions, open_classes, start_symbol).validate()


def load_grammar_file(path):
    return load_grammar(Path(path).read_text(encoding="utf-8"))


def default_grammar():
    return load_grammar(resources.files("cfqdep.data").joinpath("cfq.grammar").read_text("utf-8"))


@dataclass(frozen=True)
class Lexicon:
    """Map from surface token to the preterminal categories it may take."""

    entries: Mapping[str, FrozenSet[str]] = field(default_factory=dict)

    def categories(self, token):
        return self.entries.get(token, frozenset())

    def __contains__(self, token):
        return token in self.entries

    def __len__(self):
        return len(self.entries)

    def extended(self, extra):
        """Return a new lexicon with ``extra`` (token -> categories) merged in."""
        merged = dict(self.entries)
        for tok, cats in extra.items():
            if isinstance(cats, str):
                cats = {cats}
            merged[tok] = frozenset(merged.get(tok, frozenset()) | set(cats))
        return Lexicon(merged)

    def check(self, grammar):
        for tok, cats in self.entries.items():
            for cat in cats:
                if cat not in grammar.nonterminals:
                    raise GrammarValidationError(
                        "lexicon category %r for %r is not a grammar symbol" % (cat, tok), cat)
        return self


def load_lexicon(source):
    entries = defaultdict(set)
    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1].strip():
            raise GrammarError("expected 'token<TAB>category[,category...]'", lineno)
        cats = [c.strip() for c in parts[1].split(",") if c.strip()]
        entries[parts[0]].update(cats)
    return Lexicon({k: frozenset(v) for k, v in entries.items()})


def load_lexicon_file(path):
    return load_lexicon(Path(path).read_text(encoding="utf-8"))


def default_lexicon():
    return load_lexicon(resources.files("cfqdep.data").joinpath("cfq.lexicon").read_text("utf-8"))


@dataclass(frozen=True)
class TokenSequence:
    tokens: Tuple[str, ...]
    source_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


_TRAILING_PUNCT = ("?", ",")


def tokenize(question, source_id=None):
    """Split a CFQ question: whitespace, plus standalone ``'s``, ``,`` and ``?``."""
    if question is None or not question.strip():
        raise TokenizationError("empty question")
    out = []
    for chunk in question.replace("’", "'").split():
        trailing = []
        while len(chunk) > 1 and chunk[-1] in _TRAILING_PUNCT:
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        if len(chunk) > 2 and chunk.endswith("'s"):
            out.extend([chunk[:-2], "'s"])
        else:
            out.append(chunk)
        out.extend(reversed(trailing))
    return TokenSequence(tuple(out), source_id)


@dataclass(frozen=True)
class Node:
    """Constituency node; leaves are preterminals carrying ``token_index``."""

    label: str
    rule_id: Optional[str]
    span: Tuple[int, int]
    children: Tuple["Node", ...] = ()
    token_index: Optional[int] = None

    @property
    def is_leaf(self):
        return self.token_index is not None

    def preorder(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self):
        return [n for n in self.preorder() if n.is_leaf]


@dataclass(frozen=True)
class ConstituencyTree:
    root: Node
    tokens: Tuple[str, ...]

    def derivation(self):
        """Rule ids in preorder; the tie-break key between parses."""
        return tuple(n.rule_id for n in self.root.preorder() if n.rule_id is not None)

    def leaves(self):
        return self.root.leaves()

    def productions_used(self):
        return [n.rule_id for n in self.root.preorder() if not n.is_leaf]

    def bracketed(self):
        def show(node):
            if node.is_leaf:
                return "(%s %s)" % (node.label, self.tokens[node.token_index])
            return "(%s %s)" % (node.label, " ".join(show(c) for c in node.children))

        return show(self.root)

    def __str__(self):
        return self.bracketed()


def _token_categories(token, grammar, lexicon):
    cats = dict(grammar.lexical_index.get(token, {}))
    if lexicon is not None:
        for cat in sorted(lexicon.categories(token)):
            if cat in grammar.nonterminals:
                cats.setdefault(cat, lexical_rule_id(cat, token))
    return cats


def parse(tokens, grammar, lexicon=None, max_parses=None):
    """Return every parse of ``tokens`` rooted at the start symbol.

    Parses are sorted by derivation (preorder rule ids), so output order is
    deterministic. An ungrammatical sequence gives an empty list; a token the
    grammar and lexicon cannot categorise raises :class:`LexicalGapError`.
    """
    toks = tuple(tokens.tokens if isinstance(tokens, TokenSequence) else tokens)
    n = len(toks)
    if n == 0:
        return []
    cats = []
    for i, tok in enumerate(toks):
        c = _token_categories(tok, grammar, lexicon)
        if not c and tok not in grammar.literals:
            raise LexicalGapError(tok, i)
        cats.append(c)

    prods = grammar.structural
    chart = [set() for _ in range(n + 1)]
    waiting = [defaultdict(list) for _ in range(n + 1)]
    completed = defaultdict(list)
    edges = set()

    for i in range(n + 1):
        agenda = list(chart[i])
        predicted = set()

        def add(pos, item):
            if item not in chart[pos]:
                chart[pos].add(item)
                if pos == i:
                    agenda.append(item)

        if i == 0:
            for q in grammar.by_lhs.get(grammar.start_symbol, ()):
                add(0, (q, 0, 0))
            predicted.add(grammar.start_symbol)

        while agenda:
            item = agenda.pop()
            p, dot, origin = item
            prod = prods[p]
            if dot == len(prod.rhs):
                key = (prod.lhs, origin, i)
                completed[key].append(p)
                if key not in edges:
                    edges.add(key)
                    for (wp, wd, wo) in waiting[origin][prod.lhs]:
                        add(i, (wp, wd + 1, wo))
                continue
            sym = prod.rhs[dot]
            if dot in prod.terminals:
                if i < n and toks[i] == sym:
                    add(i + 1, (p, dot + 1, origin))
                continue
            waiting[i][sym].append(item)
            if sym not in predicted:
                predicted.add(sym)
                for q in grammar.by_lhs.get(sym, ()):
                    add(i, (q, 0, i))
            if i < n and sym in cats[i]:
                add(i + 1, (p, dot + 1, origin))

    return _extract(grammar, toks, cats, completed, edges, max_parses)


def _extract(grammar, toks, cats, completed, edges, max_parses):
    prods = grammar.structural
    n = len(toks)
    memo = {}

    def has(sym, is_term, i, j):
        if is_term:
            return j == i + 1 and toks[i] == sym
        return (sym, i, j) in edges or (j == i + 1 and sym in cats[i])

    def splits(prod, d, i, j):
        if d == len(prod.rhs):
            if i == j:
                yield ()
            return
        remaining = len(prod.rhs) - d - 1
        sym, is_term = prod.rhs[d], d in prod.terminals
        for m in range(i + 1, j - remaining + 1):
            if has(sym, is_term, i, m):
                for rest in splits(prod, d + 1, m, j):
                    yield ((sym, is_term, i, m),) + rest

    def derive(sym, i, j):
        key = (sym, i, j)
        if key in memo:
            return memo[key]
        out = []
        if j == i + 1 and sym in cats[i]:
            out.append(Node(sym, cats[i][sym], (i, j), (), i))
        for p in sorted(set(completed.get(key, ()))):
            prod = prods[p]
            for parts in splits(prod, 0, i, j):
                options = []
                for (csym, is_term, a, b) in parts:
                    if is_term:
                        options.append([Node('"%s"' % csym, None, (a, b), (), a)])
                    else:
                        options.append(derive(csym, a, b))
                for children in product(*options):
                    out.append(Node(sym, prod.rule_id, (i, j), tuple(children)))
                    if max_parses is not None and len(out) >= max_parses:
                        break
        memo[key] = out
        return out

    roots = derive(grammar.start_symbol, 0, n)
    trees = [ConstituencyTree(r, toks) for r in roots]
    trees.sort(key=ConstituencyTree.derivation)
    if max_parses is not None:
        trees = trees[:max_parses]
    return trees


def select_parse(parses, strict=False):
    """Pick the parse with the lexicographically smallest derivation."""
    if not parses:
        raise NoParseError("no parse")
    if len(parses) > 1:
        if strict:
            raise AmbiguityError(len(parses))
        logger.warning("%d parses for %r; keeping the smallest derivation",
                       len(parses), " ".join(parses[0].tokens))
    return min(parses, key=ConstituencyTree.derivation)


def verify_parse(tree, grammar, tokens):
    """Check every node against its production and the leaves against ``tokens``.

    Raises ``ValueError`` describing the first inconsistency.
    """
    toks = tuple(tokens)
    rules = {p.rule_id: p for p in grammar.productions}
    for node in tree.root.preorder():
        if node.is_leaf:
            if node.span != (node.token_index, node.token_index + 1):
                raise ValueError("leaf span mismatch at %r" % (node,))
            continue
        prod = rules.get(node.rule_id)
        if prod is None or prod.lhs != node.label:
            raise ValueError("node %s does not match a production" % node.rule_id)
        labels = tuple(c.label.strip('"') if c.label.startswith('"') else c.label
                       for c in node.children)
        if labels != prod.rhs:
            raise ValueError("children %r do not match %s" % (labels, prod.rule_id))
        start = node.span[0]
        for c in node.children:
            if c.span[0] != start:
                raise ValueError("non-adjacent children under %s" % prod.rule_id)
            start = c.span[1]
        if start != node.span[1]:
            raise ValueError("children do not cover %s" % prod.rule_id)
    leaves = tree.leaves()
    if [l.token_index for l in leaves] != list(range(len(toks))):
        raise ValueError("leaves do not cover the token sequence")
    if tuple(tree.tokens) != toks:
        raise ValueError("tree tokens differ from input")
    return True
