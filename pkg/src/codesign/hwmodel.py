"""Analytic accelerator surrogate: component-wise area and scheduled latency.

Area: the accelerator decomposes into convolution engine(s), three buffers,
an optional pooling engine, and the memory interface.  Each component
contributes a (CLB, DSP, BRAM36) resource vector via closed-form formulas
whose constants live in :class:`Calibration`; silicon area follows the
per-block mm2 coefficients of the Zynq Ultrascale+ estimate.

Latency: the cell is unrolled under the skeleton into an op DAG; each op's
latency comes from a lookup table (imported measurements or a synthetic
roofline model), and a greedy list scheduler derives the network makespan
over the parallel compute units.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np

from codesign import _kernels
from codesign.space import (
    CONV1X1,
    CONV3X3,
    MAXPOOL3X3,
    CellSpec,
    HwConfig,
    HW_FIELDS,
    SkeletonSpec,
)

ELTWISE_ADD = "ELTWISE_ADD"
CONCAT = "CONCAT"
STEM_CONV = "STEM_CONV"
DOWNSAMPLE = "DOWNSAMPLE"

OP_KINDS = (CONV3X3, CONV1X1, MAXPOOL3X3, ELTWISE_ADD, CONCAT, STEM_CONV, DOWNSAMPLE)

# mm2 per block, Zynq Ultrascale+ estimate
MM2_PER_CLB = 0.0044
MM2_PER_DSP = 0.044
MM2_PER_BRAM36 = 0.026
# relative areas in CLB equivalents
CLB_EQUIV_DSP = 10
CLB_EQUIV_BRAM36 = 6

BRAM36_BITS = 36 * 1024

CPU = "CPU"
CONV_GENERAL = "CONV_GENERAL"
CONV_3X3_ENGINE = "CONV_3X3"
CONV_1X1_ENGINE = "CONV_1X1"
POOL_ENGINE = "POOL_ENGINE"

# fixed unit slots for the scheduler; unused slots simply stay idle
UNIT_CPU, UNIT_CONV_A, UNIT_CONV_B, UNIT_POOL = 0, 1, 2, 3
N_UNITS = 4


class CoverageGap(LookupError):
    """An op variant / hw projection pair has no latency entry."""

    def __init__(self, variant, projection):
        self.variant = variant
        self.projection = projection
        super().__init__(f"no latency entry for {variant} under {projection}")


class ImportParseError(ValueError):
    """Malformed latency import CSV."""


@dataclass(frozen=True)
class Calibration:
    """Model constants; every value can be overridden from a flat key=value file."""

    f_clk_mhz: float = 200.0
    f_mem_mhz: float = 200.0
    cpu_bandwidth_gbps: float = 2.0
    cpu_overhead_ms: float = 0.05
    engine_overhead_ms: float = 0.01
    data_bytes: float = 2.0
    conv_clb_per_dsp: float = 12.0
    conv_engine_base_clb: float = 800.0
    conv_engine_bram: float = 2.0
    mem_if_clb_per_bit: float = 6.0
    pool_clb: float = 1500.0
    pool_dsp: float = 4.0
    pool_bram: float = 8.0
    acc_depth_gain: float = 0.35
    acc_conv3_gain: float = 0.06
    acc_conv1_gain: float = 0.04
    acc_pool_drop: float = 0.08
    acc_bias: float = -1.0
    acc_noise: float = 0.02


def load_calibration(path) -> Calibration:
    """Calibration from a flat ``key = value`` text file (# comments allowed)."""
    known = {f.name for f in fields(Calibration)}
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = text.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown calibration key {key!r}")
            try:
                overrides[key] = float(value.strip())
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value for {key!r}") from None
    return replace(Calibration(), **overrides)


@dataclass(frozen=True)
class ResourceVector:
    """FPGA resource counts; adds componentwise."""

    clb: float = 0.0
    dsp: float = 0.0
    bram36: float = 0.0

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(self.clb + other.clb, self.dsp + other.dsp, self.bram36 + other.bram36)

    @property
    def clb_equivalents(self) -> float:
        return self.clb + CLB_EQUIV_DSP * self.dsp + CLB_EQUIV_BRAM36 * self.bram36

    @property
    def mm2(self) -> float:
        return MM2_PER_CLB * self.clb + MM2_PER_DSP * self.dsp + MM2_PER_BRAM36 * self.bram36


def mm2_from_clb_equiv(clb_equivalents: float) -> float:
    """Silicon area of a design summarized by its CLB-equivalent count."""
    return clb_equivalents * MM2_PER_CLB


def conv_dsp_split(hw) -> tuple[int, int]:
    """(3x3-engine DSPs, 1x1-engine DSPs) for a config or projection.

    With a single general engine (ratio 1) both slots see the full budget.
    """
    total = hw.filter_par * hw.pixel_par
    if hw.ratio_conv_engines >= 1.0:
        return total, total
    d3 = int(math.floor(hw.ratio_conv_engines * total + 0.5))
    return d3, total - d3


def _buffer_bram(depth: int, port_width_bits: float) -> float:
    return math.ceil(depth * port_width_bits / BRAM36_BITS)


def area_components(hw: HwConfig, cal: Calibration = Calibration()) -> dict[str, ResourceVector]:
    """Per-component resource vectors for one configuration."""
    data_bits = cal.data_bytes * 8
    total_dsp = hw.filter_par * hw.pixel_par
    n_engines = 1 if hw.ratio_conv_engines >= 1.0 else 2
    conv = ResourceVector(
        clb=cal.conv_clb_per_dsp * total_dsp + cal.conv_engine_base_clb * n_engines,
        dsp=total_dsp,
        bram36=cal.conv_engine_bram * n_engines,
    )
    buffers = ResourceVector(
        bram36=(
            _buffer_bram(hw.input_buffer_depth, hw.pixel_par * data_bits)
            + _buffer_bram(hw.weights_buffer_depth, hw.filter_par * data_bits)
            + _buffer_bram(hw.output_buffer_depth, hw.pixel_par * data_bits)
        )
    )
    mem_if = ResourceVector(clb=cal.mem_if_clb_per_bit * hw.mem_interface_width)
    pool = (
        ResourceVector(cal.pool_clb, cal.pool_dsp, cal.pool_bram)
        if hw.pool_en
        else ResourceVector()
    )
    return {"conv_engine": conv, "buffers": buffers, "mem_interface": mem_if, "pool_engine": pool}


def area(hw: HwConfig, cal: Calibration = Calibration()) -> tuple[ResourceVector, float]:
    """(total resource vector, silicon area in mm2)."""
    total = ResourceVector()
    for vec in area_components(hw, cal).values():
        total = total + vec
    return total, total.mm2


class OpVariant(NamedTuple):
    """One op shape that can occur in the unrolled network."""

    kind: str
    h: int
    w: int
    cin: int
    cout: int


class HwProjection(NamedTuple):
    """The HwConfig fields latency depends on (buffer depths do not)."""

    filter_par: int
    pixel_par: int
    mem_interface_width: int
    ratio_conv_engines: float
    pool_en: bool


def projection(hw: HwConfig) -> HwProjection:
    return HwProjection(
        hw.filter_par, hw.pixel_par, hw.mem_interface_width, hw.ratio_conv_engines, hw.pool_en
    )


def all_projections() -> list[HwProjection]:
    """Every distinct latency-relevant projection, in enumerate_hw order."""
    opts = dict(HW_FIELDS)
    out = []
    for fp in opts["filter_par"]:
        for pp in opts["pixel_par"]:
            for mw in opts["mem_interface_width"]:
                for pe in opts["pool_en"]:
                    for r in opts["ratio_conv_engines"]:
                        out.append(HwProjection(fp, pp, mw, r, pe))
    return out


def unit_for(kind: str, proj: HwProjection) -> int:
    """Scheduler unit slot for an op kind under a projection.

    Convolutions use the general engine, or the matching specialized engine
    when the DSP budget is split (stem is 3x3-shaped, the downsample
    projection 1x1-shaped).  Pooling uses the pooling engine when present;
    element-wise and concat ops always run on the CPU.
    """
    split = proj.ratio_conv_engines < 1.0
    if kind in (CONV3X3, STEM_CONV):
        return UNIT_CONV_A
    if kind in (CONV1X1, DOWNSAMPLE):
        return UNIT_CONV_B if split else UNIT_CONV_A
    if kind == MAXPOOL3X3:
        return UNIT_POOL if proj.pool_en else UNIT_CPU
    return UNIT_CPU


UNIT_LABELS = {
    UNIT_CPU: CPU,
    UNIT_POOL: POOL_ENGINE,
}


def unit_label(slot: int, proj: HwProjection) -> str:
    if slot == UNIT_CONV_A:
        return CONV_3X3_ENGINE if proj.ratio_conv_engines < 1.0 else CONV_GENERAL
    if slot == UNIT_CONV_B:
        return CONV_1X1_ENGINE
    return UNIT_LABELS[slot]


def _macs_and_bytes(v: OpVariant, data_bytes: float) -> tuple[float, float]:
    """(multiply-accumulates, external bytes moved) for one op."""
    if v.kind in (CONV3X3, STEM_CONV):
        macs = 9.0 * v.h * v.w * v.cin * v.cout
        weights = 9.0 * v.cin * v.cout
        out_elems = v.h * v.w * v.cout
    elif v.kind == CONV1X1:
        macs = 1.0 * v.h * v.w * v.cin * v.cout
        weights = 1.0 * v.cin * v.cout
        out_elems = v.h * v.w * v.cout
    elif v.kind == DOWNSAMPLE:
        # 2x2/2 max-pool followed by a channel-doubling 1x1 projection
        macs = (v.h // 2) * (v.w // 2) * v.cin * v.cout
        weights = 1.0 * v.cin * v.cout
        out_elems = (v.h // 2) * (v.w // 2) * v.cout
    elif v.kind == MAXPOOL3X3:
        macs = 0.0
        weights = 0.0
        out_elems = v.h * v.w * v.cout
    else:  # ELTWISE_ADD, CONCAT
        macs = 0.0
        weights = 0.0
        out_elems = v.h * v.w * v.cout
    in_elems = v.h * v.w * v.cin
    return macs, (in_elems + out_elems + weights) * data_bytes


def synthetic_latency_ms(v: OpVariant, proj: HwProjection, cal: Calibration) -> float:
    """Roofline estimate: fixed overhead + max(compute time, memory time)."""
    macs, bytes_moved = _macs_and_bytes(v, cal.data_bytes)
    unit = unit_for(v.kind, proj)
    if unit == UNIT_CPU:
        return cal.cpu_overhead_ms + bytes_moved / (cal.cpu_bandwidth_gbps * 1e9) * 1e3
    mem_s = bytes_moved / ((proj.mem_interface_width / 8.0) * cal.f_mem_mhz * 1e6)
    if unit == UNIT_POOL:
        compute_s = v.h * v.w * v.cout / (proj.pixel_par * cal.f_clk_mhz * 1e6)
    else:
        d3, d1 = conv_dsp_split(proj)
        dsp = d3 if v.kind in (CONV3X3, STEM_CONV) else d1
        compute_s = macs / (dsp * cal.f_clk_mhz * 1e6)
    return cal.engine_overhead_ms + max(compute_s, mem_s) * 1e3


# ---------------------------------------------------------------------------
# network unrolling


@dataclass(frozen=True)
class UnrolledNet:
    """Op DAG of the skeleton instantiated with one cell, in topological order."""

    variants: tuple[OpVariant, ...]
    preds: tuple[tuple[int, ...], ...]

    def pred_csr(self) -> tuple[np.ndarray, np.ndarray]:
        ptr = np.zeros(len(self.preds) + 1, dtype=np.int32)
        for i, p in enumerate(self.preds):
            ptr[i + 1] = ptr[i] + len(p)
        idx = np.fromiter(
            (v for p in self.preds for v in p), dtype=np.int32, count=int(ptr[-1])
        )
        return ptr, idx


def _cell_instance(cell: CellSpec, res: int, ch: int, input_op: int, ops, preds) -> int:
    """Append one cell instance; returns the op index producing its output.

    All interior ops run at the stack's channel width.  A node with several
    incoming edges is preceded by an element-wise add; the output node
    concatenates its feeders and, when there is more than one, projects back
    to the stack width with a 1x1 convolution.  A single-feeder output passes
    through without an op, so the minimal INPUT->OUTPUT cell is an identity.
    """
    n = cell.num_nodes
    kind_of = {CONV3X3: CONV3X3, CONV1X1: CONV1X1, MAXPOOL3X3: MAXPOOL3X3}
    producer = {0: input_op}
    for v in range(1, n - 1):
        feeders = [producer[i] for i in range(v) if cell.adjacency[i][v]]
        src = feeders[0]
        if len(feeders) > 1:
            ops.append(OpVariant(ELTWISE_ADD, res, res, len(feeders) * ch, ch))
            preds.append(tuple(feeders))
            src = len(ops) - 1
        ops.append(OpVariant(kind_of[cell.ops[v - 1]], res, res, ch, ch))
        preds.append((src,))
        producer[v] = len(ops) - 1
    feeders = [producer[i] for i in range(n - 1) if cell.adjacency[i][n - 1]]
    if len(feeders) == 1:
        return feeders[0]
    k = len(feeders)
    ops.append(OpVariant(CONCAT, res, res, k * ch, k * ch))
    preds.append(tuple(feeders))
    ops.append(OpVariant(CONV1X1, res, res, k * ch, ch))
    preds.append((len(ops) - 2,))
    return len(ops) - 1


def unroll(cell: CellSpec, skeleton: SkeletonSpec) -> UnrolledNet:
    """Stem, stacks of repeated cells, and inter-stack downsamples as one DAG."""
    ops: list[OpVariant] = []
    preds: list[tuple[int, ...]] = []
    ops.append(OpVariant(STEM_CONV, skeleton.input_resolution, skeleton.input_resolution, 3, skeleton.stem_channels))
    preds.append(())
    cursor = 0
    for s, (res, ch) in enumerate(skeleton.stack_shapes()):
        for _ in range(skeleton.cells_per_stack):
            cursor = _cell_instance(cell, res, ch, cursor, ops, preds)
        if s < skeleton.num_stacks - 1:
            ops.append(OpVariant(DOWNSAMPLE, res, res, ch, 2 * ch))
            preds.append((cursor,))
            cursor = len(ops) - 1
    return UnrolledNet(tuple(ops), tuple(preds))


def reachable_variants(skeleton: SkeletonSpec) -> list[OpVariant]:
    """Superset of op variants any valid cell can produce under the skeleton.

    Element-wise fan-in and output concat width are covered up to the
    structural maxima of the 7-node / 9-edge cell space.
    """
    out = [OpVariant(STEM_CONV, skeleton.input_resolution, skeleton.input_resolution, 3, skeleton.stem_channels)]
    shapes = skeleton.stack_shapes()
    for s, (res, ch) in enumerate(shapes):
        for kind in (CONV3X3, CONV1X1, MAXPOOL3X3):
            out.append(OpVariant(kind, res, res, ch, ch))
        for k in range(2, 6):
            out.append(OpVariant(ELTWISE_ADD, res, res, k * ch, ch))
        for k in range(2, 7):
            out.append(OpVariant(CONCAT, res, res, k * ch, k * ch))
            out.append(OpVariant(CONV1X1, res, res, k * ch, ch))
        if s < skeleton.num_stacks - 1:
            out.append(OpVariant(DOWNSAMPLE, res, res, ch, 2 * ch))
    seen = set()
    uniq = []
    for v in out:
        if v not in seen:
            seen.add(v)
            uniq.append(v)
    return uniq


# ---------------------------------------------------------------------------
# latency table

MEASURED_IMPORT = "MEASURED_IMPORT"
SYNTHETIC = "SYNTHETIC"

_SRC_MISSING, _SRC_MEASURED, _SRC_SYNTHETIC = 0, 1, 2

IMPORT_COLUMNS = [
    "kind", "h", "w", "cin", "cout",
    "filter_par", "pixel_par", "mem_width", "ratio", "pool_en", "latency_ms",
]


@dataclass(frozen=True)
class SyntheticSource:
    """Fill the whole table from the roofline model."""

    calibration: Calibration = Calibration()


@dataclass(frozen=True)
class ImportSource:
    """Read measured entries from CSV; optionally backfill gaps synthetically."""

    path: str
    fallback: Calibration | None = None


class LatencyTable:
    """Dense (op variant x hw projection) latency matrix with provenance."""

    def __init__(self, skeleton: SkeletonSpec, variants, projections, lat, src):
        self.skeleton = skeleton
        self.variants = list(variants)
        self.projections = list(projections)
        self._row = {v: i for i, v in enumerate(self.variants)}
        self._col = {p: j for j, p in enumerate(self.projections)}
        self._lat = lat
        self._src = src

    @property
    def variant_count(self) -> int:
        return len(self.variants)

    def provenance_counts(self) -> dict[str, int]:
        return {
            MEASURED_IMPORT: int((self._src == _SRC_MEASURED).sum()),
            SYNTHETIC: int((self._src == _SRC_SYNTHETIC).sum()),
        }

    def lookup(self, variant: OpVariant, proj: HwProjection) -> float:
        i = self._row.get(variant)
        j = self._col.get(proj)
        if i is None or j is None or self._src[i, j] == _SRC_MISSING:
            raise CoverageGap(variant, proj)
        return float(self._lat[i, j])

    def row_index(self, variant: OpVariant) -> int:
        i = self._row.get(variant)
        if i is None:
            raise CoverageGap(variant, None)
        return i

    def col_index(self, proj: HwProjection) -> int:
        return self._col[proj]

    def matrix(self) -> np.ndarray:
        return self._lat


def _parse_import_row(row: dict, lineno: int) -> tuple[OpVariant, HwProjection, float]:
    try:
        kind = row["kind"]
        if kind not in OP_KINDS:
            raise ValueError(f"unknown kind {kind!r}")
        variant = OpVariant(kind, int(row["h"]), int(row["w"]), int(row["cin"]), int(row["cout"]))
        pool_raw = row["pool_en"].strip().lower()
        if pool_raw not in ("true", "false", "0", "1"):
            raise ValueError(f"bad pool_en {row['pool_en']!r}")
        proj = HwProjection(
            int(row["filter_par"]),
            int(row["pixel_par"]),
            int(row["mem_width"]),
            float(row["ratio"]),
            pool_raw in ("true", "1"),
        )
        latency_ms = float(row["latency_ms"])
        if latency_ms <= 0:
            raise ValueError("latency_ms must be positive")
    except (KeyError, TypeError, ValueError) as exc:
        raise ImportParseError(f"line {lineno}: {exc}") from exc
    return variant, proj, latency_ms


def build_latency_table(skeleton: SkeletonSpec, source) -> LatencyTable:
    """Latency table covering every reachable variant for every projection.

    With an :class:`ImportSource` and no fallback, a missing entry raises
    :class:`CoverageGap` here rather than later during evaluation.
    """
    variants = reachable_variants(skeleton)
    projections = all_projections()
    lat = np.zeros((len(variants), len(projections)), dtype=np.float64)
    src = np.zeros_like(lat, dtype=np.uint8)

    if isinstance(source, SyntheticSource):
        for i, v in enumerate(variants):
            for j, p in enumerate(projections):
                lat[i, j] = synthetic_latency_ms(v, p, source.calibration)
        src[:] = _SRC_SYNTHETIC
        return LatencyTable(skeleton, variants, projections, lat, src)

    if not isinstance(source, ImportSource):
        raise TypeError(f"unsupported latency source {source!r}")

    table = LatencyTable(skeleton, variants, projections, lat, src)
    with open(source.path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != IMPORT_COLUMNS:
            raise ImportParseError(
                f"header must be exactly {','.join(IMPORT_COLUMNS)}"
            )
        for lineno, row in enumerate(reader, 2):
            variant, proj, latency_ms = _parse_import_row(row, lineno)
            i = table._row.get(variant)
            j = table._col.get(proj)
            if i is None or j is None:
                continue  # entry outside this skeleton's reach; harmless
            lat[i, j] = latency_ms
            src[i, j] = _SRC_MEASURED
    gaps = np.argwhere(src == _SRC_MISSING)
    if len(gaps):
        if source.fallback is None:
            i, j = gaps[0]
            raise CoverageGap(variants[i], projections[j])
        for i, j in gaps:
            lat[i, j] = synthetic_latency_ms(variants[i], projections[j], source.fallback)
            src[i, j] = _SRC_SYNTHETIC
    return table


# ---------------------------------------------------------------------------
# scheduling


@dataclass(frozen=True)
class ScheduledOp:
    index: int
    variant: OpVariant
    unit: str
    start_ms: float
    end_ms: float


def schedule(
    cell: CellSpec,
    skeleton: SkeletonSpec,
    hw: HwConfig,
    table: LatencyTable,
) -> tuple[float, list[ScheduledOp]]:
    """Greedy list schedule of the unrolled network; returns (makespan, plan).

    Ready ops are placed lowest-topological-index first on their unit; every
    op starts no earlier than its predecessors' finishes and its unit's
    availability.
    """
    net = unroll(cell, skeleton)
    proj = projection(hw)
    durations = np.array([table.lookup(v, proj) for v in net.variants], dtype=np.float64)
    units = np.array([unit_for(v.kind, proj) for v in net.variants], dtype=np.int32)
    ptr, idx = net.pred_csr()
    makespan, starts = _kernels.schedule_core(durations, units, N_UNITS, ptr, idx)
    plan = [
        ScheduledOp(i, net.variants[i], unit_label(int(units[i]), proj), float(starts[i]),
                    float(starts[i] + durations[i]))
        for i in range(len(net.variants))
    ]
    return float(makespan), plan


def latency(cell: CellSpec, skeleton: SkeletonSpec, hw: HwConfig, table: LatencyTable) -> float:
    """Total network latency in milliseconds for one codesign point."""
    makespan, _ = schedule(cell, skeleton, hw, table)
    return makespan


def _kind_unit_matrix(table: LatencyTable) -> np.ndarray:
    """(kind, projection) -> unit slot, cached on the table."""
    cached = getattr(table, "_unit_matrix", None)
    if cached is None:
        cached = np.array(
            [[unit_for(kind, p) for p in table.projections] for kind in OP_KINDS],
            dtype=np.int32,
        )
        table._unit_matrix = cached
    return cached


def projection_latencies(cell: CellSpec, skeleton: SkeletonSpec, table: LatencyTable) -> np.ndarray:
    """Network latency under every hw projection at once (enumeration path).

    Equals ``latency(cell, skeleton, hw, table)`` for any hw mapping to each
    projection; one batched schedule per cell instead of 8640.
    """
    net = unroll(cell, skeleton)
    rows = [table.row_index(v) for v in net.variants]
    if (table._src[rows] == _SRC_MISSING).any():
        i, j = np.argwhere(table._src[rows] == _SRC_MISSING)[0]
        raise CoverageGap(net.variants[i], table.projections[j])
    durations = np.ascontiguousarray(table.matrix()[rows].T)
    kind_idx = [OP_KINDS.index(v.kind) for v in net.variants]
    units = np.ascontiguousarray(_kind_unit_matrix(table)[kind_idx].T)
    ptr, idx = net.pred_csr()
    return _kernels.schedule_batch(durations, units, N_UNITS, ptr, idx)
