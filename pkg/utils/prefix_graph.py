"""
Prefix-adder topologies: coordinates, occupancy graphs, coordinate sequences,
validity checking, size/depth metrics and classical constructors.

A prefix graph of width n is a lower-triangular occupancy matrix; entry
(j, i) is set iff node l[j:i] exists. Rows are stored bit-packed: bit i of
``rows[j]`` is entry (j, i).

Merge nodes use the restricted parent rule: the more significant parent
(MSP) of (j, i) is the nearest occupied node to its right in row j, at
column c', and the less significant parent (LSP) is (c' - 1, i).
"""

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from models.errors import GraphValidationError, MergeRuleError, SequenceValidationError
from models.schemas import GraphPayload, RuleViolation, SequencePayload, ValidationReport


class Coordinate(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class PrefixGraph:
    width: int
    rows: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.width < 2:
            raise GraphValidationError(f"width must be >= 2, got {self.width}", "input")
        if len(self.rows) != self.width:
            raise GraphValidationError(
                f"expected {self.width} packed rows, got {len(self.rows)}", "input"
            )
        for j, bits in enumerate(self.rows):
            if bits < 0 or bits >> (j + 1):
                raise GraphValidationError(
                    f"row {j} has entries above the diagonal", "input", [(j, j)]
                )

    @classmethod
    def from_nodes(cls, width: int, nodes: Iterable[Tuple[int, int]]) -> "PrefixGraph":
        rows = [0] * width
        for row, col in nodes:
            if not (0 <= col <= row < width):
                raise GraphValidationError(
                    f"coordinate ({row},{col}) outside the lower triangle of width {width}",
                    "input",
                    [(row, col)],
                )
            rows[row] |= 1 << col
        return cls(width, tuple(rows))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "PrefixGraph":
        matrix = np.asarray(matrix, dtype=bool)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise GraphValidationError(f"expected a square matrix, got shape {matrix.shape}", "input")
        if np.triu(matrix, k=1).any():
            rows, cols = np.nonzero(np.triu(matrix, k=1))
            raise GraphValidationError(
                "matrix has entries above the diagonal",
                "input",
                [(int(r), int(c)) for r, c in zip(rows, cols)],
            )
        return cls.from_nodes(matrix.shape[0], zip(*np.nonzero(matrix)))

    def to_matrix(self) -> np.ndarray:
        matrix = np.zeros((self.width, self.width), dtype=bool)
        for row, col in self.nodes():
            matrix[row, col] = True
        return matrix

    def occupied(self, row: int, col: int) -> bool:
        return 0 <= col <= row < self.width and bool(self.rows[row] >> col & 1)

    def row_columns(self, row: int) -> List[int]:
        """Occupied columns of a row, diagonal first (scan order)."""
        bits = self.rows[row]
        return [c for c in range(row, -1, -1) if bits >> c & 1]

    def nodes(self) -> Iterator[Coordinate]:
        for row in range(self.width):
            for col in self.row_columns(row):
                yield Coordinate(row, col)

    def merge_nodes(self) -> List[Coordinate]:
        return [node for node in self.nodes() if node.col < node.row]

    def with_toggled(self, row: int, col: int) -> "PrefixGraph":
        rows = list(self.rows)
        rows[row] ^= 1 << col
        return PrefixGraph(self.width, tuple(rows))


@dataclass(frozen=True)
class CoordinateSequence:
    width: int
    coords: Tuple[Coordinate, ...]

    @classmethod
    def of(cls, width: int, pairs: Iterable[Sequence[int]]) -> "CoordinateSequence":
        return cls(width, tuple(Coordinate(int(r), int(c)) for r, c in pairs))

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def last(self) -> Coordinate:
        return self.coords[-1]

    @property
    def is_complete(self) -> bool:
        return bool(self.coords) and self.coords[-1] == (self.width - 1, 0)

    def pairs(self) -> List[List[int]]:
        return [[c.row, c.col] for c in self.coords]

    def key(self) -> str:
        """Design identity: hash of the scan-order serialization."""
        text = json.dumps({"width": self.width, "seq": self.pairs()}, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


NodeLevels = Dict[Coordinate, int]


def max_sequence_length(width: int) -> int:
    return width * (width + 1) // 2


def min_depth(width: int) -> int:
    """Smallest achievable depth, counting the input row as a level."""
    return math.ceil(math.log2(width)) + 1


# -----------------------------------------------------------------------------
# Sequence checks
# -----------------------------------------------------------------------------
def check_sequence(seq: CoordinateSequence, require_complete: bool = True) -> None:
    """
    Check scan order and the restricted merge rule.

    Raises SequenceValidationError naming the first offending index.
    """
    n = seq.width
    if n < 2:
        raise SequenceValidationError(f"width must be >= 2, got {n}", 0)
    if not seq.coords:
        raise SequenceValidationError("empty sequence", 0)

    seen_cols: Dict[int, set] = {}
    prev: Optional[Coordinate] = None
    for index, (row, col) in enumerate(seq.coords):
        if not (0 <= col <= row < n):
            raise SequenceValidationError(
                f"coordinate ({row},{col}) outside the lower triangle of width {n}", index
            )
        if prev is None:
            if (row, col) != (0, 0):
                raise SequenceValidationError(f"sequence must start at (0,0), got ({row},{col})", index)
        elif prev.col == 0:
            if (row, col) != (prev.row + 1, prev.row + 1):
                raise SequenceValidationError(
                    f"row {prev.row} is complete; expected ({prev.row + 1},{prev.row + 1}), got ({row},{col})",
                    index,
                )
        else:
            if row != prev.row:
                raise SequenceValidationError(
                    f"row {prev.row} must end at column 0 before row {row} starts", index
                )
            if col >= prev.col:
                raise SequenceValidationError(
                    f"columns must strictly decrease within row {row}: {prev.col} then {col}", index
                )
            if col not in seen_cols.get(prev.col - 1, ()):
                raise SequenceValidationError(
                    f"merge rule violated at ({row},{col}): LSP ({prev.col - 1},{col}) absent", index
                )
        seen_cols.setdefault(row, set()).add(col)
        prev = Coordinate(row, col)

    if require_complete and not seq.is_complete:
        raise SequenceValidationError(
            f"sequence ends at ({prev.row},{prev.col}); missing terminal ({n - 1},0)", len(seq.coords)
        )


def sequence_to_graph(seq: CoordinateSequence) -> PrefixGraph:
    check_sequence(seq, require_complete=True)
    return PrefixGraph.from_nodes(seq.width, seq.coords)


def graph_to_sequence(graph: PrefixGraph) -> CoordinateSequence:
    report = validate(graph)
    if not report.valid:
        first = report.violations[0]
        raise GraphValidationError(
            first.message, first.rule, [tuple(c) for c in first.coordinates]
        )
    return CoordinateSequence(graph.width, tuple(graph.nodes()))


# -----------------------------------------------------------------------------
# Parents, validation, metrics
# -----------------------------------------------------------------------------
def resolve_parents(graph: PrefixGraph, node: Tuple[int, int]) -> Tuple[Coordinate, Coordinate]:
    row, col = node
    if not (col < row and graph.occupied(row, col)):
        raise GraphValidationError(f"({row},{col}) is not a merge node of this graph", "merge", [(row, col)])
    upper = graph.rows[row] >> (col + 1)
    if not upper:
        raise MergeRuleError(f"no MSP to the right of ({row},{col})", [(row, col)])
    msp_col = col + 1 + ((upper & -upper).bit_length() - 1)
    lsp = Coordinate(msp_col - 1, col)
    if not graph.occupied(*lsp):
        raise MergeRuleError(
            f"merge rule violated at ({row},{col}): LSP ({lsp.row},{lsp.col}) absent", [(row, col)]
        )
    return Coordinate(row, msp_col), lsp


def validate(graph: PrefixGraph) -> ValidationReport:
    violations: List[RuleViolation] = []
    n = graph.width

    missing_inputs = [[i, i] for i in range(n) if not graph.occupied(i, i)]
    for coord in missing_inputs:
        violations.append(RuleViolation(
            rule="input", coordinates=[coord], message=f"input rule violated at bit {coord[0]}"
        ))

    for row in range(1, n):
        if not graph.occupied(row, 0):
            violations.append(RuleViolation(
                rule="output", coordinates=[[row, 0]], message=f"output rule violated at row {row}"
            ))

    for node in graph.merge_nodes():
        try:
            resolve_parents(graph, node)
        except MergeRuleError as exc:
            violations.append(RuleViolation(rule="merge", coordinates=[list(node)], message=str(exc)))

    return ValidationReport(width=n, violations=violations)


def size(graph: PrefixGraph) -> int:
    return sum(bin(bits & ~(1 << j)).count("1") for j, bits in enumerate(graph.rows))


def levels(graph: PrefixGraph) -> NodeLevels:
    # Parents precede their child in scan order, so one pass suffices.
    level: NodeLevels = {}
    for node in graph.nodes():
        if node.col == node.row:
            level[node] = 0
        else:
            msp, lsp = resolve_parents(graph, node)
            level[node] = 1 + max(level[msp], level[lsp])
    return level


def depth(graph: PrefixGraph) -> int:
    return 1 + max(levels(graph).values())


def design_key(graph: PrefixGraph) -> str:
    return CoordinateSequence(graph.width, tuple(graph.nodes())).key()


# -----------------------------------------------------------------------------
# Classical constructors
# -----------------------------------------------------------------------------
def _require_width(n: int) -> None:
    if n < 2:
        raise GraphValidationError(f"width must be >= 2, got {n}", "input")


def _with_io(n: int, nodes: Iterable[Tuple[int, int]]) -> PrefixGraph:
    base = [(i, i) for i in range(n)] + [(i, 0) for i in range(n)]
    return PrefixGraph.from_nodes(n, list(base) + list(nodes))


def ripple(n: int) -> PrefixGraph:
    _require_width(n)
    return _with_io(n, [])


def sklansky(n: int) -> PrefixGraph:
    _require_width(n)
    nodes = []
    for m in range(n):
        remaining, col, step = m, m, 1
        while remaining > 0:
            if remaining % 2 == 1:
                col -= step
                nodes.append((m, col))
            remaining //= 2
            step *= 2
    return _with_io(n, nodes)


def kogge_stone(n: int) -> PrefixGraph:
    _require_width(n)
    nodes = []
    for m in range(n):
        col, step = m, 1
        while col > 0:
            nodes.append((m, col))
            col -= step
            step *= 2
    return _with_io(n, nodes)


def brent_kung(n: int) -> PrefixGraph:
    _require_width(n)
    nodes = []
    span = 2
    while span < n:
        for m in range(span - 1, n, span):
            nodes.append((m, m - span + 1))
        span *= 2
    return _with_io(n, nodes)


CONSTRUCTORS = {
    "sklansky": sklansky,
    "kogge_stone": kogge_stone,
    "brent_kung": brent_kung,
    "ripple": ripple,
}


# -----------------------------------------------------------------------------
# JSON interchange
# -----------------------------------------------------------------------------
def graph_to_payload(graph: PrefixGraph) -> GraphPayload:
    return GraphPayload(width=graph.width, nodes=[list(node) for node in graph.merge_nodes()])


def graph_from_payload(payload: GraphPayload) -> PrefixGraph:
    return _with_io(payload.width, [tuple(pair) for pair in payload.nodes])


def graph_to_json(graph: PrefixGraph) -> str:
    return graph_to_payload(graph).model_dump_json()


def graph_from_json(text: str) -> PrefixGraph:
    return graph_from_payload(GraphPayload.model_validate_json(text))


def sequence_to_payload(seq: CoordinateSequence) -> SequencePayload:
    return SequencePayload(width=seq.width, seq=seq.pairs())


def sequence_from_payload(payload: SequencePayload) -> CoordinateSequence:
    return CoordinateSequence.of(payload.width, payload.seq)


def sequence_to_json(seq: CoordinateSequence) -> str:
    return sequence_to_payload(seq).model_dump_json()


def sequence_from_json(text: str) -> CoordinateSequence:
    return sequence_from_payload(SequencePayload.model_validate_json(text))
