"""Error types raised by hiersel.

Every domain error derives from :class:`HierselError`, itself a ``ValueError``,
so callers that only care about bad input can catch ``ValueError``.  The CLI
reports ``type(err).__name__`` on standard error.
"""


class HierselError(ValueError):
    """Base class for all domain and validation errors."""


# hierarchy parsing / validation
class CycleDetected(HierselError):
    pass


class MultipleParents(HierselError):
    def __init__(self, name):
        super().__init__(f"node {name!r} has more than one parent")
        self.node_name = name


class MultipleRoots(HierselError):
    def __init__(self, names):
        names = sorted(names)
        super().__init__(f"more than one root: {', '.join(map(repr, names))}")
        self.names = names


class DuplicateEdge(HierselError):
    pass


class EmptyHierarchy(HierselError):
    pass


class FewerThanTwoLeaves(HierselError):
    pass


class MalformedLine(HierselError):
    def __init__(self, lineno, detail="expected 'parent<TAB>child'"):
        super().__init__(f"line {lineno}: {detail}")
        self.lineno = lineno


class LabelNotLeaf(HierselError):
    pass


# score ingestion
class UnknownLeafColumn(HierselError):
    pass


class MissingLeafColumn(HierselError):
    pass


class UnknownLabel(HierselError):
    pass


class NonFiniteValue(HierselError):
    pass


class RowSumOutOfTolerance(HierselError):
    pass


class KindMismatch(HierselError):
    pass


# metrics
class LengthMismatch(HierselError):
    pass


class EmptyInput(HierselError):
    pass


class TooFewPoints(HierselError):
    pass


class ZeroBaseline(HierselError):
    pass


# guarantee
class DomainError(HierselError):
    pass


class DegenerateBeta(HierselError):
    pass


class CapExceeded(HierselError):
    pass


class UnsupportedRule(HierselError):
    pass


class EmptyCalibrationSet(HierselError):
    pass


# cli parameter solving
class OverdeterminedParameters(HierselError):
    pass


class UnderdeterminedParameters(HierselError):
    pass
