"""Exception hierarchy shared by every dplp module."""


class DplpError(Exception):
    """Root of all errors raised by dplp."""


class ValidationError(DplpError, ValueError):
    """Input or precondition failure. The CLI exits with status 1 on these."""


class EdgeListParseError(ValidationError):
    def __init__(self, line_number: int, line: str, reason: str = "expected two non-negative integers"):
        self.line_number = line_number
        self.line = line
        super().__init__(f"line {line_number}: {reason}: {line!r}")


class NodeIndexError(ValidationError, IndexError):
    def __init__(self, node: int, node_count: int):
        self.node = node
        self.node_count = node_count
        super().__init__(f"node id {node} out of range for graph with {node_count} nodes")


class PerturbationError(ValidationError):
    """Add of an existing edge or Remove of an absent one."""


class EmptyPoolError(ValidationError):
    pass


class UndefinedBoundError(ValidationError):
    pass


class UndefinedMetricError(ValidationError):
    pass


class EnumerationLimitError(DplpError):
    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"refusing to enumerate {count} ordered lists (limit {limit})")


class NoEligibleQueriesError(DplpError):
    pass


class QuerySkipped(DplpError):
    """Signal raised when a query node cannot be evaluated (e.g. it has no neighbors)."""

    def __init__(self, query: int, reason: str):
        self.query = query
        self.reason = reason
        super().__init__(f"query {query} skipped: {reason}")
