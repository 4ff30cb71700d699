"""Accuracy oracle: table lookup for precomputed results, or a synthetic
surrogate for self-contained experiments.

Accuracy is a function of the cell only; the hardware half of a codesign
point never enters here.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from codesign.hwmodel import Calibration
from codesign.space import CONV1X1, CONV3X3, MAXPOOL3X3, CellSpec, cell_hash

TABLE = "TABLE"
SYNTHETIC = "SYNTHETIC"

TSV_HEADER = "#codesign-acc-v1"


class NotInTable(KeyError):
    def __init__(self, digest):
        self.digest = digest
        super().__init__(f"no accuracy record for digest {digest}")


class TableFormatError(ValueError):
    """Malformed accuracy TSV."""


class DuplicateDigest(TableFormatError):
    def __init__(self, digest):
        self.digest = digest
        super().__init__(f"duplicate digest {digest}")


@dataclass(frozen=True)
class AccuracyRecord:
    cell_digest: str
    accuracy: float
    source: str


def cell_features(cell: CellSpec) -> dict[str, int]:
    """Structural features the synthetic surrogate scores."""
    n = cell.num_nodes
    depth = [0] * n
    for j in range(1, n):
        preds = [depth[i] for i in range(j) if cell.adjacency[i][j]]
        via = max(preds) if preds else 0
        depth[j] = via + (1 if 1 <= j <= n - 2 else 0)
    counts = {op: cell.ops.count(op) for op in (CONV3X3, CONV1X1, MAXPOOL3X3)}
    return {
        "effective_depth": depth[n - 1],  # ops on the longest INPUT->OUTPUT path
        "conv3x3": counts[CONV3X3],
        "conv1x1": counts[CONV1X1],
        "maxpool": counts[MAXPOOL3X3],
    }


def _unit_noise(digest: str, seed: int) -> float:
    """Deterministic zero-mean draw in (-1, 1) from (cell digest, run seed)."""
    h = hashlib.blake2b(f"{digest}:{seed}".encode(), digest_size=8).digest()
    u = int.from_bytes(h, "big") / 2**64
    return 2.0 * u - 1.0


class SyntheticAccuracy:
    """Monotone-in-capacity surrogate with seed-reproducible noise.

    accuracy = sigmoid(a*depth + b*#conv3x3 + c*#conv1x1 - d*#maxpool + bias)
               + noise(seed, cell), clamped to [0, 1].
    """

    def __init__(self, seed: int = 0, calibration: Calibration = Calibration()):
        self.seed = seed
        self.cal = calibration

    def noise_free(self, cell: CellSpec) -> float:
        f = cell_features(cell)
        cal = self.cal
        z = (
            cal.acc_depth_gain * f["effective_depth"]
            + cal.acc_conv3_gain * f["conv3x3"]
            + cal.acc_conv1_gain * f["conv1x1"]
            - cal.acc_pool_drop * f["maxpool"]
            + cal.acc_bias
        )
        return 1.0 / (1.0 + math.exp(-z))

    def accuracy(self, cell: CellSpec) -> AccuracyRecord:
        digest = cell_hash(cell)
        value = self.noise_free(cell) + self.cal.acc_noise * _unit_noise(digest, self.seed)
        return AccuracyRecord(digest, min(1.0, max(0.0, value)), SYNTHETIC)


class TableAccuracy:
    """Exact digest -> accuracy lookup backed by a TSV file."""

    def __init__(self, records: dict[str, float]):
        self._records = dict(records)

    def __len__(self):
        return len(self._records)

    def accuracy(self, cell: CellSpec) -> AccuracyRecord:
        digest = cell_hash(cell)
        try:
            return AccuracyRecord(digest, self._records[digest], TABLE)
        except KeyError:
            raise NotInTable(digest) from None

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(TSV_HEADER + "\n")
            for digest, acc in self._records.items():
                fh.write(f"{digest}\t{acc!r}\n")


def load_table(path) -> TableAccuracy:
    """Parse an accuracy TSV (header line, then digest<TAB>accuracy rows)."""
    records: dict[str, float] = {}
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != TSV_HEADER:
            raise TableFormatError(f"expected header {TSV_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TableFormatError(f"line {lineno}: expected 2 tab-separated fields")
            digest, raw = parts
            if len(digest) != 32 or any(c not in "0123456789abcdef" for c in digest):
                raise TableFormatError(f"line {lineno}: bad digest {digest!r}")
            try:
                acc = float(raw)
            except ValueError:
                raise TableFormatError(f"line {lineno}: bad accuracy {raw!r}") from None
            if not 0.0 <= acc <= 1.0:
                raise TableFormatError(f"line {lineno}: accuracy {acc} outside [0, 1]")
            if digest in records:
                raise DuplicateDigest(digest)
            records[digest] = acc
    return TableAccuracy(records)
