"""Joint search space: CNN cells, accelerator configurations, and their product.

A cell is an upper-triangular labeled DAG with a fixed INPUT node (0) and
OUTPUT node (last), at most 7 nodes and 9 edges.  The accelerator space is
the cross product of 8 discrete hardware parameters (8640 configurations).
This module owns validation/pruning, isomorphism-invariant hashing,
exhaustive enumeration, the controller decision schema, and the canonical
one-line text encoding of a search point.
"""
from __future__ import annotations

import hashlib
import itertools
import re
from dataclasses import dataclass
from typing import Iterator, Sequence

CONV3X3 = "CONV3X3"
CONV1X1 = "CONV1X1"
MAXPOOL3X3 = "MAXPOOL3X3"

#: Intermediate-node op vocabulary; index = digit used in text encodings.
CELL_OPS = (CONV3X3, CONV1X1, MAXPOOL3X3)

MAX_NODES = 7
MAX_EDGES = 9

#: Hardware parameters in listing order.  This order defines enumeration
#: order, decision order, and the text encoding field order.
HW_FIELDS = (
    ("filter_par", (8, 16)),
    ("pixel_par", (4, 8, 16, 32, 64)),
    ("input_buffer_depth", (1024, 2048, 4096, 8192)),
    ("weights_buffer_depth", (1024, 2048, 4096)),
    ("output_buffer_depth", (1024, 2048, 4096)),
    ("mem_interface_width", (256, 512)),
    ("pool_en", (False, True)),
    ("ratio_conv_engines", (1.0, 0.75, 0.67, 0.5, 0.33, 0.25)),
)

REJECT_MALFORMED = "MalformedMatrix"
REJECT_TOO_MANY_EDGES = "TooManyEdges"
REJECT_DISCONNECTED = "Disconnected"


@dataclass(frozen=True)
class CellSpec:
    """A CNN cell: strictly upper-triangular adjacency plus intermediate ops.

    ``adjacency[i][j] == 1`` means node i feeds node j.  Node 0 is the cell
    input, node ``num_nodes - 1`` the cell output; ``ops[k]`` labels
    intermediate node ``k + 1``.  Instances are plain immutable containers;
    use :func:`validate_cell` to check invariants and canonicalize.
    """

    adjacency: tuple[tuple[int, ...], ...]
    ops: tuple[str, ...]

    @property
    def num_nodes(self) -> int:
        return len(self.adjacency)

    @property
    def num_edges(self) -> int:
        return sum(sum(row) for row in self.adjacency)

    def edges(self) -> list[tuple[int, int]]:
        n = self.num_nodes
        return [(i, j) for i in range(n) for j in range(n) if self.adjacency[i][j]]

    @staticmethod
    def from_edges(num_nodes: int, edges: Sequence[tuple[int, int]], ops: Sequence[str]) -> "CellSpec":
        rows = [[0] * num_nodes for _ in range(num_nodes)]
        for i, j in edges:
            rows[i][j] = 1
        return CellSpec(tuple(tuple(r) for r in rows), tuple(ops))

    @staticmethod
    def chain(ops: Sequence[str]) -> "CellSpec":
        """Linear cell INPUT -> op_1 -> ... -> op_k -> OUTPUT."""
        n = len(ops) + 2
        return CellSpec.from_edges(n, [(i, i + 1) for i in range(n - 1)], ops)


@dataclass(frozen=True)
class HwConfig:
    """One accelerator configuration (all fields from finite option sets).

    ``ratio_conv_engines == 1`` means a single general convolution engine;
    below 1 the DSP budget is split between a 3x3-specialized and a
    1x1-specialized engine.
    """

    filter_par: int
    pixel_par: int
    input_buffer_depth: int
    weights_buffer_depth: int
    output_buffer_depth: int
    mem_interface_width: int
    pool_en: bool
    ratio_conv_engines: float

    def values(self) -> tuple:
        return tuple(getattr(self, name) for name, _ in HW_FIELDS)


@dataclass(frozen=True)
class SearchPoint:
    """One codesign point: a canonical cell paired with an accelerator config."""

    cell: CellSpec
    hw: HwConfig


@dataclass(frozen=True)
class SkeletonSpec:
    """Fixed outer network hosting the searched cell.

    A stem convolution feeds ``num_stacks`` stacks of ``cells_per_stack``
    cell instances; between stacks a downsample halves the resolution and
    doubles the channel count.
    """

    num_stacks: int = 3
    cells_per_stack: int = 3
    stem_channels: int = 128
    input_resolution: int = 32

    def __post_init__(self):
        if self.num_stacks < 1 or self.cells_per_stack < 1:
            raise ValueError("skeleton needs at least one stack and one cell per stack")
        if self.input_resolution >> (self.num_stacks - 1) < 1:
            raise ValueError("input resolution too small for the downsample chain")

    def stack_shapes(self) -> list[tuple[int, int]]:
        """(resolution, channels) seen by cells in each stack."""
        return [
            (self.input_resolution >> s, self.stem_channels << s)
            for s in range(self.num_stacks)
        ]


@dataclass(frozen=True)
class CellCheck:
    """Verdict of :func:`validate_cell`: the canonical cell on accept."""

    ok: bool
    reason: str | None = None
    cell: CellSpec | None = None


def edge_order(num_nodes: int) -> list[tuple[int, int]]:
    """Row-major upper-triangular edge positions (the decision order)."""
    return [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes)]


def _well_formed(cell: CellSpec) -> bool:
    n = cell.num_nodes
    if n < 2 or n > MAX_NODES:
        return False
    if any(len(row) != n for row in cell.adjacency):
        return False
    for i in range(n):
        for j in range(n):
            v = cell.adjacency[i][j]
            if v not in (0, 1) or (v and j <= i):
                return False
    if len(cell.ops) != n - 2:
        return False
    return all(op in CELL_OPS for op in cell.ops)


def _prune(cell: CellSpec) -> CellSpec | None:
    """Drop nodes off every INPUT->OUTPUT path; None if nothing remains."""
    n = cell.num_nodes
    fwd = {0}
    for i in range(n):
        if i in fwd:
            fwd.update(j for j in range(i + 1, n) if cell.adjacency[i][j])
    bwd = {n - 1}
    for j in range(n - 1, -1, -1):
        if j in bwd:
            bwd.update(i for i in range(j) if cell.adjacency[i][j])
    keep = sorted(fwd & bwd)
    if 0 not in keep or (n - 1) not in keep:
        return None
    if len(keep) == n:
        return cell
    remap = {old: new for new, old in enumerate(keep)}
    edges = [(remap[i], remap[j]) for i, j in cell.edges() if i in remap and j in remap]
    ops = tuple(cell.ops[v - 1] for v in keep[1:-1])
    return CellSpec.from_edges(len(keep), edges, ops)


def validate_cell(cell: CellSpec) -> CellCheck:
    """Check cell invariants and canonicalize.

    Accepts iff the matrix is a well-formed strictly upper-triangular 0/1
    matrix on 2..7 nodes with at most 9 edges, and pruning nodes that lie on
    no INPUT->OUTPUT path leaves a connected graph.  The accepted cell is
    the pruned one.  Node/edge bounds are checked on the cell as given,
    before pruning.
    """
    if not _well_formed(cell):
        return CellCheck(False, REJECT_MALFORMED)
    if cell.num_edges > MAX_EDGES:
        return CellCheck(False, REJECT_TOO_MANY_EDGES)
    pruned = _prune(cell)
    if pruned is None:
        return CellCheck(False, REJECT_DISCONNECTED)
    return CellCheck(True, None, pruned)


def cell_hash(cell: CellSpec) -> str:
    """128-bit isomorphism-invariant digest of a canonical cell (32 hex chars).

    Iterative neighborhood relabeling over the labeled DAG: each node starts
    from (out-degree, in-degree, label) and repeatedly absorbs the sorted
    digests of its in- and out-neighbors; the sorted multiset of node digests
    is hashed once more.  Isomorphic cells (relabelings of intermediate nodes
    preserving op labels) collide by construction.
    """
    n = cell.num_nodes
    adj = cell.adjacency
    labels = [-1] + [CELL_OPS.index(op) for op in cell.ops] + [-2]
    in_deg = [sum(adj[i][v] for i in range(n)) for v in range(n)]
    out_deg = [sum(adj[v][j] for j in range(n)) for v in range(n)]
    digests = [
        hashlib.md5(str((out_deg[v], in_deg[v], labels[v])).encode()).hexdigest()
        for v in range(n)
    ]
    for _ in range(n):
        nxt = []
        for v in range(n):
            in_nb = sorted(digests[i] for i in range(n) if adj[i][v])
            out_nb = sorted(digests[j] for j in range(n) if adj[v][j])
            nxt.append(
                hashlib.md5(
                    ("".join(in_nb) + "|" + "".join(out_nb) + "|" + digests[v]).encode()
                ).hexdigest()
            )
        digests = nxt
    return hashlib.md5(str(sorted(digests)).encode()).hexdigest()


def enumerate_hw() -> Iterator[HwConfig]:
    """All 8640 accelerator configurations, lexicographic in HW_FIELDS order."""
    for combo in itertools.product(*(opts for _, opts in HW_FIELDS)):
        yield HwConfig(*combo)


def _is_full_dag(matrix: list[list[int]]) -> bool:
    """True when every node has an in-path and out-path (nothing to prune)."""
    n = len(matrix)
    for v in range(n - 1):
        if not any(matrix[v][j] for j in range(v + 1, n)):
            return False
    for v in range(1, n):
        if not any(matrix[i][v] for i in range(v)):
            return False
    return True


def enumerate_cells(max_nodes: int = MAX_NODES, max_edges: int = MAX_EDGES) -> Iterator[CellSpec]:
    """One canonical representative per isomorphism class of valid cells.

    Iterates node counts 2..max_nodes; for each, walks every upper-triangular
    edge bitmask (row-major bit order), keeps matrices where no node is
    prunable (pruned graphs reappear at smaller node counts), attaches every
    op labeling, and deduplicates by :func:`cell_hash`.
    """
    if max_nodes > MAX_NODES or max_edges > MAX_EDGES:
        raise ValueError(f"bounds exceed the {MAX_NODES}-node / {MAX_EDGES}-edge space")
    seen: set[str] = set()
    for n in range(2, max_nodes + 1):
        positions = edge_order(n)
        for bits in range(1 << len(positions)):
            matrix = [[0] * n for _ in range(n)]
            count = 0
            for k, (i, j) in enumerate(positions):
                if (bits >> k) & 1:
                    matrix[i][j] = 1
                    count += 1
            if count > max_edges or not _is_full_dag(matrix):
                continue
            frozen = tuple(tuple(row) for row in matrix)
            for labeling in itertools.product(CELL_OPS, repeat=n - 2):
                cell = CellSpec(frozen, labeling)
                digest = cell_hash(cell)
                if digest not in seen:
                    seen.add(digest)
                    yield cell


CELL_SPACE = "CELL"
HW_SPACE = "HW"
JOINT_SPACE = "JOINT"


def decision_schema(space: str, max_nodes: int = MAX_NODES) -> list[tuple[str, int]]:
    """Ordered (decision name, option count) pairs the controller samples.

    CELL: one binary decision per upper-triangular edge position (row-major),
    then one ternary op decision per intermediate node.  HW: one decision per
    hardware field in listing order.  JOINT: CELL then HW.
    """
    cell = [(f"edge_{i}_{j}", 2) for i, j in edge_order(max_nodes)]
    cell += [(f"op_{v}", len(CELL_OPS)) for v in range(1, max_nodes - 1)]
    hw = [(name, len(opts)) for name, opts in HW_FIELDS]
    if space == CELL_SPACE:
        return cell
    if space == HW_SPACE:
        return hw
    if space == JOINT_SPACE:
        return cell + hw
    raise ValueError(f"unknown space {space!r}")


def decode_cell(choices: Sequence[int], max_nodes: int = MAX_NODES) -> CellSpec:
    """Raw (unvalidated) cell from a CELL decision vector."""
    positions = edge_order(max_nodes)
    n_edges = len(positions)
    matrix = [[0] * max_nodes for _ in range(max_nodes)]
    for k, (i, j) in enumerate(positions):
        if choices[k]:
            matrix[i][j] = 1
    ops = tuple(CELL_OPS[c] for c in choices[n_edges:])
    return CellSpec(tuple(tuple(row) for row in matrix), ops)


def decode_hw(choices: Sequence[int]) -> HwConfig:
    return HwConfig(*(opts[c] for (_, opts), c in zip(HW_FIELDS, choices)))


def decode_point(choices: Sequence[int], max_nodes: int = MAX_NODES) -> tuple[CellSpec, HwConfig]:
    """Split a JOINT decision vector into (raw cell, hw config)."""
    n_cell = len(decision_schema(CELL_SPACE, max_nodes))
    return decode_cell(choices[:n_cell], max_nodes), decode_hw(choices[n_cell:])


_RATIO_STR = {1.0: "1", 0.75: "0.75", 0.67: "0.67", 0.5: "0.5", 0.33: "0.33", 0.25: "0.25"}
_POINT_RE = re.compile(r"^cell=([01]{21}):([0-2]{5}) hw=([^ ]+)$")


class PointFormatError(ValueError):
    """Raised when a point text encoding does not parse."""


def encode_point(point: SearchPoint) -> str:
    """Canonical one-line encoding: ``cell=<21 bits>:<5 op digits> hw=<8 csv>``.

    Cells with fewer than 7 nodes embed with INPUT at position 0, OUTPUT at
    position 6, and unused intermediate slots left edgeless (op digit 0).
    """
    cell = point.cell
    n = cell.num_nodes
    pos = {v: v for v in range(n - 1)}
    pos[n - 1] = MAX_NODES - 1
    edges = {(pos[i], pos[j]) for i, j in cell.edges()}
    bits = "".join("1" if (i, j) in edges else "0" for i, j in edge_order(MAX_NODES))
    digits = "".join(
        str(CELL_OPS.index(cell.ops[v - 1])) if v <= n - 2 else "0"
        for v in range(1, MAX_NODES - 1)
    )
    hw = point.hw
    fields = [
        str(hw.filter_par),
        str(hw.pixel_par),
        str(hw.input_buffer_depth),
        str(hw.weights_buffer_depth),
        str(hw.output_buffer_depth),
        str(hw.mem_interface_width),
        "true" if hw.pool_en else "false",
        _RATIO_STR[hw.ratio_conv_engines],
    ]
    return f"cell={bits}:{digits} hw={','.join(fields)}"


def parse_point(text: str) -> SearchPoint:
    """Inverse of :func:`encode_point`; validates and canonicalizes the cell."""
    m = _POINT_RE.match(text.strip())
    if not m:
        raise PointFormatError(f"unparseable point encoding: {text!r}")
    bits, digits, hw_csv = m.groups()
    choices = [int(b) for b in bits] + [int(d) for d in digits]
    raw = decode_cell(choices)
    check = validate_cell(raw)
    if not check.ok:
        raise PointFormatError(f"encoded cell is invalid ({check.reason})")
    parts = hw_csv.split(",")
    if len(parts) != len(HW_FIELDS):
        raise PointFormatError(f"expected {len(HW_FIELDS)} hw fields, got {len(parts)}")
    values = []
    for raw_value, (name, opts) in zip(parts, HW_FIELDS):
        if name == "pool_en":
            if raw_value not in ("true", "false"):
                raise PointFormatError(f"bad pool_en value {raw_value!r}")
            values.append(raw_value == "true")
        elif name == "ratio_conv_engines":
            matches = [v for v, s in _RATIO_STR.items() if s == raw_value]
            if not matches:
                raise PointFormatError(f"bad ratio_conv_engines value {raw_value!r}")
            values.append(matches[0])
        else:
            try:
                v = int(raw_value)
            except ValueError:
                raise PointFormatError(f"bad {name} value {raw_value!r}") from None
            if v not in opts:
                raise PointFormatError(f"{name}={v} not in {opts}")
            values.append(v)
    return SearchPoint(cell=check.cell, hw=HwConfig(*values))
