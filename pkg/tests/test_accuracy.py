"""Accuracy oracle backends."""
import pytest

from codesign import accuracy as acc
from codesign.space import CONV1X1, CONV3X3, MAXPOOL3X3, CellSpec, cell_hash, enumerate_cells


def test_synthetic_is_deterministic():
    oracle = acc.SyntheticAccuracy(seed=123)
    cell = CellSpec.chain([CONV3X3, CONV1X1])
    assert oracle.accuracy(cell) == oracle.accuracy(cell)


def test_synthetic_depends_on_seed_but_not_wildly():
    cell = CellSpec.chain([CONV3X3])
    a = acc.SyntheticAccuracy(seed=1).accuracy(cell).accuracy
    b = acc.SyntheticAccuracy(seed=2).accuracy(cell).accuracy
    assert a != b
    assert abs(a - b) <= 2 * acc.Calibration().acc_noise + 1e-12


def test_synthetic_range_and_depth_monotonicity():
    oracle = acc.SyntheticAccuracy(seed=0)
    for cell in enumerate_cells(4, 9):
        value = oracle.accuracy(cell).accuracy
        assert 0.0 <= value <= 1.0
    # strictly deeper conv chains score strictly higher noise-free
    chains = [CellSpec.chain([CONV3X3] * k) for k in range(0, 6)]
    scores = [oracle.noise_free(c) for c in chains]
    assert all(a < b for a, b in zip(scores, scores[1:]))


def test_feature_extraction():
    cell = CellSpec.from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)],
                               [CONV3X3, CONV1X1, MAXPOOL3X3])
    f = acc.cell_features(cell)
    assert f["effective_depth"] == 2
    assert f["conv3x3"] == 1 and f["conv1x1"] == 1 and f["maxpool"] == 1
    skip = CellSpec.from_edges(3, [(0, 1), (1, 2), (0, 2)], [CONV3X3])
    assert acc.cell_features(skip)["effective_depth"] == 1


def test_isomorphic_cells_share_accuracy():
    oracle = acc.SyntheticAccuracy(seed=5)
    a = CellSpec.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)], [CONV3X3, CONV1X1])
    b = CellSpec.from_edges(4, [(0, 2), (0, 1), (2, 3), (1, 3)], [CONV1X1, CONV3X3])
    assert cell_hash(a) == cell_hash(b)
    assert oracle.accuracy(a) == oracle.accuracy(b)


def test_table_lookup_and_miss(tmp_path):
    cells = list(enumerate_cells(3, 9))
    rows = {cell_hash(c): 0.5 + 0.04 * i for i, c in enumerate(cells)}
    path = tmp_path / "acc.tsv"
    acc.TableAccuracy(rows).dump(path)
    table = acc.load_table(path)
    assert len(table) == len(rows)
    rec = table.accuracy(cells[1])
    assert rec.accuracy == rows[cell_hash(cells[1])]
    assert rec.source == acc.TABLE
    missing = CellSpec.chain([CONV3X3, CONV3X3, CONV3X3])
    with pytest.raises(acc.NotInTable):
        table.accuracy(missing)


def test_table_roundtrip_identity(tmp_path):
    rows = {cell_hash(c): 0.25 for c in enumerate_cells(3, 9)}
    t1 = acc.TableAccuracy(rows)
    p1, p2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
    t1.dump(p1)
    t2 = acc.load_table(p1)
    t2.dump(p2)
    assert p1.read_text() == p2.read_text()


def test_empty_table(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text(acc.TSV_HEADER + "\n")
    assert len(acc.load_table(path)) == 0


def test_duplicate_digest_rejected(tmp_path):
    digest = "0" * 32
    path = tmp_path / "dup.tsv"
    path.write_text(f"{acc.TSV_HEADER}\n{digest}\t0.5\n{digest}\t0.6\n")
    with pytest.raises(acc.DuplicateDigest):
        acc.load_table(path)


def test_parse_errors(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("wrong header\n")
    with pytest.raises(acc.TableFormatError):
        acc.load_table(path)
    path.write_text(f"{acc.TSV_HEADER}\nnot-a-digest\t0.5\n")
    with pytest.raises(acc.TableFormatError, match="line 2"):
        acc.load_table(path)
    path.write_text(f"{acc.TSV_HEADER}\n{'a' * 32}\t1.5\n")
    with pytest.raises(acc.TableFormatError):
        acc.load_table(path)
