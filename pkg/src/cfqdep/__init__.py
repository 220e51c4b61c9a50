"""Gold dependency treebanks for CFQ and construction-level analysis of parser generalization."""

from .constructions import ConstructionInventory, extract, inventory, signature
from .depconvert import Pipeline, Question, build_corpus, to_dependencies
from .grammar import default_grammar, default_lexicon, parse, tokenize
from .metrics import evaluate
from .tree import DependencyTree
from .treebank import read_conllu, write_conllu

__all__ = [
    "ConstructionInventory", "DependencyTree", "Pipeline", "Question", "build_corpus",
    "default_grammar", "default_lexicon", "evaluate", "extract", "inventory", "parse",
    "read_conllu", "signature", "to_dependencies", "tokenize", "write_conllu",
]
__version__ = "0.1.0"
