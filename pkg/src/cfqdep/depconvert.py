"""Constituency-to-dependency conversion, right-node raising and anonymisation.

Each structural production has one :class:`DepRule` naming its head child and
the relation of every other child. A child marked ``PENDING`` contributes its
head to a pending set instead of an arc; pending tokens travel upward until a
rule carrying an ``ATTACH_PENDING`` directive attaches them (as ``case``) to
the head of one of its children. This is how prepositions in
``written by and produced by X`` reach ``X``.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import grammar as gr
from .errors import (
    AmbiguityError,
    AnonymizationError,
    CfqDepError,
    ConfigurationError,
    ConversionError,
    GrammarError,
    LexicalGapError,
    NoParseError,
    TokenizationError,
    TreeError,
)
from .tree import ROOT, UD_LABELS, DependencyTree

logger = logging.getLogger(__name__)

PENDING = "PENDING"

# Preterminals whose tokens are mined under a shared category label;
# every other preterminal is labelled by its lower-cased surface form.
CATEGORY_LABELS = {
    "V": "verb",
    "Adj": "adjective",
    "role": "role",
    "Name": "entity",
    "commonNoun": "noun",
}


@dataclass(frozen=True)
class DepRule:
    """Head selection and arc labels for one production.

    ``labels[k]`` is the relation of rhs child ``k`` (``None`` for the head,
    ``PENDING`` to defer). ``attach_to[k]`` optionally redirects the arc to
    the head of another child. ``pending_attach`` is ``(child, label)``.
    """

    rule_id: str
    head_child: int
    labels: Tuple[Optional[str], ...]
    attach_to: Tuple[Optional[int], ...] = ()
    pending_attach: Optional[Tuple[int, str]] = None

    def __post_init__(self):
        if not 0 <= self.head_child < len(self.labels):
            raise ConfigurationError("head index out of range in %s" % self.rule_id)
        for k, lab in enumerate(self.labels):
            if (k == self.head_child) != (lab is None):
                raise ConfigurationError("rule %s needs exactly one head and a label for "
                                         "every other child" % self.rule_id)
        if not self.attach_to:
            object.__setattr__(self, "attach_to", (None,) * len(self.labels))


@dataclass(frozen=True)
class PartialDependencies:
    """Arcs built for one constituent, its head, and tokens still awaiting a head."""

    arcs: Dict[int, Tuple[int, str]]
    head: int
    pending: Tuple[int, ...] = ()
    child_heads: Tuple[int, ...] = ()


def load_rules(source, grammar=None):
    """Parse a DepRule table; with ``grammar``, check one rule per production."""
    rules = {}
    for lineno, raw in enumerate(source.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.rstrip("\n").split("\t")
        if len(cols) not in (3, 4):
            raise GrammarError("expected 3 or 4 tab-separated columns", lineno)
        rule_id, head, labels = cols[0].strip(), cols[1].strip(), cols[2].strip()
        try:
            head = int(head)
        except ValueError:
            raise GrammarError("head index %r is not an integer" % head, lineno) from None
        names = [] if labels == "-" else [x.strip() for x in labels.split(",")]
        child_labels, attach = [], []
        for lab in names:
            target = None
            if "@" in lab:
                lab, _, tgt = lab.partition("@")
                target = int(tgt)
            child_labels.append(lab)
            attach.append(target)
        child_labels.insert(head, None)
        attach.insert(head, None)
        pending_attach = None
        if len(cols) == 4:
            directive = cols[3].strip()
            if not directive.startswith("ATTACH_PENDING:"):
                raise GrammarError("unknown directive %r" % directive, lineno)
            _, child, lab = directive.split(":", 2)
            pending_attach = (int(child), lab)
        if rule_id in rules:
            raise GrammarError("duplicate rule %s" % rule_id, lineno)
        try:
            rules[rule_id] = DepRule(rule_id, head, tuple(child_labels), tuple(attach),
                                     pending_attach)
        except ConfigurationError as exc:
            raise GrammarError(str(exc), lineno) from None
    if grammar is not None:
        check_rules(rules, grammar)
    return rules


def check_rules(rules, grammar):
    for prod in grammar.structural:
        rule = rules.get(prod.rule_id)
        if rule is None:
            raise ConfigurationError("no dependency rule for %s" % prod.rule_id)
        if len(rule.labels) != len(prod.rhs):
            raise ConfigurationError("rule %s has %d slots for %d children"
                                     % (prod.rule_id, len(rule.labels), len(prod.rhs)))
    known = {p.rule_id for p in grammar.structural}
    extra = sorted(set(rules) - known)
    if extra:
        raise ConfigurationError("dependency rules for unknown productions: %s" % extra)
    return rules


def load_rules_file(path, grammar=None):
    return load_rules(Path(path).read_text(encoding="utf-8"), grammar)


def default_rules(grammar=None):
    text = resources.files("cfqdep.data").joinpath("cfq.deprules").read_text("utf-8")
    return load_rules(text, grammar)


def pass_up_pending(partial, rule):
    """Discharge pending tokens if ``rule`` has an attach directive."""
    if rule.pending_attach is None or not partial.pending:
        return partial
    child, label = rule.pending_attach
    target = partial.child_heads[child]
    arcs = dict(partial.arcs)
    for tok in partial.pending:
        arcs[tok] = (target, label)
    return PartialDependencies(arcs, partial.head, (), partial.child_heads)


def _combine(children, rule):
    arcs = {}
    pending = []
    heads = tuple(c.head for c in children)
    for c in children:
        arcs.update(c.arcs)
        pending.extend(c.pending)
    for k, c in enumerate(children):
        label = rule.labels[k]
        if label is None:
            continue
        if label == PENDING:
            pending.append(c.head)
            continue
        target = heads[rule.head_child] if rule.attach_to[k] is None else heads[rule.attach_to[k]]
        arcs[c.head] = (target, label)
    return PartialDependencies(arcs, heads[rule.head_child], tuple(pending), heads)


def token_category(preterminal, token):
    return CATEGORY_LABELS.get(preterminal, token.lower())


def to_dependencies(tree, rules, label_inventory=UD_LABELS):
    """Convert a :class:`~cfqdep.grammar.ConstituencyTree` bottom-up."""
    n = len(tree.tokens)
    categories = [None] * n

    def walk(node):
        if node.is_leaf:
            label = node.label.strip('"')
            categories[node.token_index] = token_category(label, tree.tokens[node.token_index])
            return PartialDependencies({}, node.token_index)
        rule = rules.get(node.rule_id)
        if rule is None:
            raise ConfigurationError("no dependency rule for %s" % node.rule_id)
        if len(rule.labels) != len(node.children):
            raise ConfigurationError("rule %s does not fit node arity" % node.rule_id)
        partial = _combine([walk(c) for c in node.children], rule)
        return pass_up_pending(partial, rule)

    top = walk(tree.root)
    if top.pending:
        raise ConversionError(
            "tokens left without a head: %s" % ", ".join(
                "%s@%d" % (tree.tokens[i], i) for i in top.pending),
            [tree.tokens[i] for i in top.pending])
    arcs = dict(top.arcs)
    arcs[top.head] = (ROOT, "root")
    missing = [i for i in range(n) if i not in arcs]
    if missing:
        raise ConversionError("tokens without arcs: %s" % missing,
                              [tree.tokens[i] for i in missing])
    dep = DependencyTree(
        tree.tokens,
        [arcs[i][0] for i in range(n)],
        [arcs[i][1] for i in range(n)],
        categories,
    )
    try:
        dep.validate(label_inventory)
    except TreeError as exc:
        raise ConversionError(str(exc)) from None
    return dep


@dataclass(frozen=True)
class AnonymizationMap:
    """Per-sentence (original span text, replacement name) pairs, left to right."""

    pairs: Tuple[Tuple[Tuple[str, ...], str], ...] = ()

    def restore(self, name):
        for original, replacement in self.pairs:
            if replacement == name:
                return original
        raise KeyError(name)

    def __len__(self):
        return len(self.pairs)


def anonymize(tokens, entity_spans, name_pool):
    """Replace each ``[start, end)`` entity span with the next pool name."""
    seq = tokens if isinstance(tokens, gr.TokenSequence) else gr.TokenSequence(tuple(tokens))
    spans = [tuple(s) for s in entity_spans]
    prev_end = 0
    for start, end in spans:
        if not 0 <= start < end <= len(seq):
            raise AnonymizationError("span %r outside the %d-token sentence" % ((start, end), len(seq)))
        if start < prev_end:
            raise AnonymizationError("overlapping or unordered span %r" % ((start, end),))
        prev_end = end
    if len(spans) > len(name_pool):
        raise AnonymizationError("name pool exhausted: %d spans, %d names"
                                 % (len(spans), len(name_pool)))
    out, pairs, pos = [], [], 0
    for (start, end), name in zip(spans, name_pool):
        out.extend(seq.tokens[pos:start])
        out.append(name)
        pairs.append((tuple(seq.tokens[start:end]), name))
        pos = end
    out.extend(seq.tokens[pos:])
    return gr.TokenSequence(tuple(out), seq.source_id), AnonymizationMap(tuple(pairs))


def default_name_pool():
    text = resources.files("cfqdep.data").joinpath("names.txt").read_text("utf-8")
    return load_name_pool(text)


def load_name_pool(text):
    return [line.strip() for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")]


@dataclass(frozen=True)
class Question:
    sent_id: str
    text: str
    entity_spans: Tuple[Tuple[int, int], ...] = ()


@dataclass
class Failure:
    sent_id: str
    reason: str
    detail: str

    def to_json(self):
        return json.dumps({"sent_id": self.sent_id, "reason": self.reason,
                           "detail": self.detail}, ensure_ascii=False)


@dataclass
class CorpusResult:
    trees: List[Tuple[str, DependencyTree]] = field(default_factory=list)
    failures: List[Failure] = field(default_factory=list)
    ambiguous: List[Tuple[str, int]] = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures


@dataclass(frozen=True)
class Pipeline:
    """Loaded, immutable conversion resources."""

    grammar: "gr.Grammar"
    lexicon: "gr.Lexicon"
    rules: Dict[str, DepRule]
    name_pool: Tuple[str, ...]
    strict: bool = False

    @classmethod
    def default(cls, strict=False):
        grammar = gr.default_grammar()
        pool = tuple(default_name_pool())
        lexicon = gr.default_lexicon().extended({name: "Name" for name in pool}).check(grammar)
        return cls(grammar, lexicon, default_rules(grammar), pool, strict)

    def convert(self, question):
        """Return ``(tree, n_parses)`` for one question; raises on failure."""
        tokens = gr.tokenize(question.text, question.sent_id)
        if question.entity_spans:
            tokens, _ = anonymize(tokens, question.entity_spans, self.name_pool)
        parses = gr.parse(tokens, self.grammar, self.lexicon)
        if not parses:
            raise NoParseError("no parse for %r" % " ".join(tokens))
        best = gr.select_parse(parses, strict=self.strict)
        return to_dependencies(best, self.rules), len(parses)


_REASONS = (
    (TokenizationError, "tokenize"),
    (AnonymizationError, "anonymize"),
    (LexicalGapError, "lexical_gap"),
    (NoParseError, "no_parse"),
    (AmbiguityError, "ambiguous"),
    (ConversionError, "conversion"),
)


def _convert_one(args):
    pipeline, question = args
    try:
        tree, count = pipeline.convert(question)
        return tree, count, None
    except CfqDepError as exc:
        for cls, reason in _REASONS:
            if isinstance(exc, cls):
                return None, 0, (reason, str(exc))
        raise


def build_corpus(questions, pipeline=None, jobs=1):
    """Convert every question; per-question failures are collected, not raised."""
    pipeline = pipeline or Pipeline.default()
    questions = list(questions)
    work = [(pipeline, q) for q in questions]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_convert_one, work, chunksize=256))
    else:
        outcomes = [_convert_one(w) for w in work]
    result = CorpusResult()
    for q, (tree, count, failure) in zip(questions, outcomes):
        if failure is not None:
            result.failures.append(Failure(q.sent_id, *failure))
            continue
        if count > 1:
            result.ambiguous.append((q.sent_id, count))
        result.trees.append((q.sent_id, tree))
    if result.ambiguous:
        logger.warning("%d of %d questions had more than one parse",
                       len(result.ambiguous), len(questions))
    return result
