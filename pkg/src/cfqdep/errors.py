"""Exception hierarchy shared by every cfqdep module."""


class CfqDepError(Exception):
    """Base class for all errors raised by this package."""


class GrammarError(CfqDepError):
    """Malformed grammar, lexicon or rule source.

    ``line`` is the 1-based source line when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


class GrammarValidationError(GrammarError):
    def __init__(self, message, symbol=None, line=None):
        self.symbol = symbol
        super().__init__(message, line)


class TokenizationError(CfqDepError):
    pass


class LexicalGapError(CfqDepError):
    def __init__(self, token, position=None):
        self.token = token
        self.position = position
        super().__init__("unknown token %r at position %s" % (token, position))


class NoParseError(CfqDepError):
    pass


class AmbiguityError(CfqDepError):
    def __init__(self, count):
        self.count = count
        super().__init__("%d parses found in strict-ambiguity mode" % count)


class ConfigurationError(CfqDepError):
    pass


class ConversionError(CfqDepError):
    def __init__(self, message, tokens=()):
        self.tokens = tuple(tokens)
        super().__init__(message)


class AnonymizationError(CfqDepError):
    pass


class TreeError(CfqDepError):
    """A dependency tree violates an invariant (treehood, labels, ...)."""


class ConlluError(CfqDepError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


class AlignmentError(CfqDepError):
    pass


class DegenerateFitError(CfqDepError):
    """Training labels contain a single class.

    ``fallback`` holds the intercept-only fit callers may use instead.
    """

    def __init__(self, message, fallback=None):
        self.fallback = fallback
        super().__init__(message)
