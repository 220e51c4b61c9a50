"""CoNLL-U reading/writing and train/test split definitions."""

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from .errors import ConfigurationError, ConlluError, TreeError
from .tree import ROOT, UNKNOWN_CATEGORY, DependencyTree

CATEGORY_KEY = "Category"
VALIDATION_FRACTION = 0.2


@dataclass(frozen=True)
class Sentence:
    sent_id: Optional[str]
    tree: DependencyTree
    comments: Tuple[str, ...] = ()


@dataclass
class ConlluDocument:
    sentences: List[Sentence] = field(default_factory=list)

    def __post_init__(self):
        ids = [s.sent_id for s in self.sentences if s.sent_id is not None]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ConlluError("duplicate sent_id: %s" % ", ".join(dupes))

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def ids(self):
        return [s.sent_id for s in self.sentences]

    @property
    def trees(self):
        return [s.tree for s in self.sentences]

    def subset(self, keep):
        """Document restricted to sentences whose position is in ``keep``."""
        keep = set(keep)
        return ConlluDocument([s for i, s in enumerate(self.sentences) if i in keep])

    @classmethod
    def from_trees(cls, items):
        return cls([Sentence(sid, tree) for sid, tree in items])


def _format_sentence(sent):
    tree = sent.tree
    try:
        tree.validate()
    except TreeError as exc:
        raise ConlluError("sentence %s: %s" % (sent.sent_id, exc)) from None
    lines = []
    if sent.sent_id is not None:
        lines.append("# sent_id = %s" % sent.sent_id)
    lines.extend("# " + c for c in sent.comments)
    for i, tok in enumerate(tree.tokens):
        head = 0 if tree.heads[i] == ROOT else tree.heads[i] + 1
        misc = "%s=%s" % (CATEGORY_KEY, tree.categories[i])
        lines.append("\t".join([str(i + 1), tok, "_", "_", "_", "_", str(head),
                                tree.labels[i], "_", misc]))
    return "\n".join(lines) + "\n\n"


def write_conllu(doc, destination=None):
    """Serialise ``doc``; also write to ``destination`` (path or text stream) if given."""
    text = "".join(_format_sentence(s) for s in doc.sentences)
    if destination is not None:
        if isinstance(destination, (str, Path)):
            Path(destination).write_text(text, encoding="utf-8", newline="\n")
        else:
            destination.write(text)
    return text


def _parse_misc(misc):
    if misc == "_":
        return {}
    out = {}
    for item in misc.split("|"):
        key, sep, value = item.partition("=")
        if sep:
            out[key] = value
    return out


def read_conllu(source):
    """Parse CoNLL-U from a path, a text stream, or a string holding the data.

    Multiword-token and empty-node lines are skipped. A missing
    ``Category=`` entry in MISC yields category ``unknown``.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()

    sentences = []
    rows, comments, sent_id, start_line = [], [], None, None

    def flush():
        nonlocal rows, comments, sent_id
        if rows:
            n = len(rows)
            heads, labels, tokens, cats = [], [], [], []
            for lineno, cols in rows:
                try:
                    head = int(cols[6])
                except ValueError:
                    raise ConlluError("head %r is not an integer" % cols[6], lineno) from None
                if not 0 <= head <= n:
                    raise ConlluError("head index %d out of range 0..%d" % (head, n), lineno)
                heads.append(ROOT if head == 0 else head - 1)
                labels.append(cols[7])
                tokens.append(cols[1])
                cats.append(_parse_misc(cols[9]).get(CATEGORY_KEY, UNKNOWN_CATEGORY))
            sentences.append(Sentence(sent_id, DependencyTree(tokens, heads, labels, cats),
                                      tuple(comments)))
        elif comments or sent_id is not None:
            raise ConlluError("sentence without tokens", start_line)
        rows, comments, sent_id = [], [], None

    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if start_line is None or (not rows and not comments and sent_id is None):
            start_line = lineno
        if line.startswith("#"):
            body = line[1:].strip()
            key, sep, value = body.partition("=")
            if sep and key.strip() == "sent_id":
                sent_id = value.strip()
            else:
                comments.append(body)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError("expected 10 columns, found %d" % len(cols), lineno)
        if "-" in cols[0] or "." in cols[0]:
            continue
        try:
            idx = int(cols[0])
        except ValueError:
            raise ConlluError("bad token id %r" % cols[0], lineno) from None
        if idx != len(rows) + 1:
            raise ConlluError("token id %d out of sequence" % idx, lineno)
        rows.append((lineno, cols))
    flush()
    try:
        return ConlluDocument(sentences)
    except ConlluError as exc:
        raise ConlluError(str(exc)) from None


@dataclass
class SplitSpec:
    """A named train/test partition of sentence ids with its compound divergence."""

    name: str
    train: List[str]
    test: List[str]
    divergence: Optional[float] = None
    seed: int = 0
    validation: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.train = [str(x) for x in self.train]
        self.test = [str(x) for x in self.test]
        self.validation = [str(x) for x in self.validation]
        overlap = set(self.train) & set(self.test)
        if overlap:
            raise ConfigurationError("split %s: %d ids in both train and test (e.g. %s)"
                                     % (self.name, len(overlap), sorted(overlap)[0]))
        if self.divergence is not None and not 0 <= self.divergence <= 0.7 + 1e-12:
            raise ConfigurationError("split %s: divergence %r outside [0, 0.7]"
                                     % (self.name, self.divergence))

    def to_json(self):
        return {"name": self.name, "divergence": self.divergence, "seed": self.seed,
                "train": self.train, "validation": self.validation, "test": self.test}


def load_split(path, name=None, seed=0):
    """Read a split file: this package's SplitSpec JSON or a CFQ split file.

    CFQ split files (``trainIdxs``/``devIdxs``/``testIdxs``) have their
    validation part discarded; callers resample it with
    :func:`resample_validation`.
    """
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    if "trainIdxs" in data:
        return SplitSpec(name or path.stem, data["trainIdxs"], data["testIdxs"],
                         data.get("divergence"), seed)

    def ids(key):
        value = data.get(key, [])
        if isinstance(value, str):
            return (base / value).read_text(encoding="utf-8").split()
        return value

    for key in ("name", "train", "test"):
        if key not in data:
            raise ConfigurationError("split file %s lacks %r" % (path, key))
    return SplitSpec(data["name"], ids("train"), ids("test"), data.get("divergence"),
                     data.get("seed", seed), ids("validation"))


def resample_validation(train_ids, seed, fraction=VALIDATION_FRACTION):
    """Carve ``floor(fraction * n)`` ids out of ``train_ids`` as validation.

    Both returned lists keep the input order.
    """
    ids = list(train_ids)
    k = math.floor(fraction * len(ids))
    chosen = set(random.Random(seed).sample(range(len(ids)), k))
    train = [x for i, x in enumerate(ids) if i not in chosen]
    validation = [x for i, x in enumerate(ids) if i in chosen]
    return train, validation
