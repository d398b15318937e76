"""Snapshot post-processing: dual evaluation, aggregation, and variances.

The estimator of a process-matrix entry is the empirical average of the
product, over frame blocks, of dual-table values looked up at the observed
(measured, prepared) state pair.  This module evaluates those products on
snapshot streams, aggregates them (plain mean or median of means), plans
sample budgets from variance bounds, and computes exact variances
analytically for block-product channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelModel, GateLayer, ProcessMatrix, block_chi
from .frames import (
    FrameTable,
    build_f,
    pair_row_index,
    rotated_f,
    rotated_frame,
)
from .pauli import PauliString


# ---------------------------------------------------------------------------
# frame assignment
# ---------------------------------------------------------------------------

@dataclass
class FrameAssignment:
    """Dual tables assigned to disjoint blocks covering all n qubits."""

    n: int
    blocks: list  # (support tuple, entries (36^q, 16^q), unitary | None)

    def __post_init__(self):
        seen = set()
        for support, _, _ in self.blocks:
            seen.update(support)
        if seen != set(range(self.n)):
            raise ValueError("frame blocks must cover every qubit exactly once")


def plain_frames(n: int, table: FrameTable) -> FrameAssignment:
    """One single-qubit dual table on every qubit."""
    if table.arity != 1:
        raise ValueError("plain_frames expects an arity-1 table")
    return FrameAssignment(n, [((q,), table.entries, None) for q in range(n)])


def rotated_frames(
    layer: GateLayer,
    table: FrameTable,
    minimize: bool = True,
) -> FrameAssignment:
    """Gate-rotated dual tables on the layer blocks, plain ones elsewhere.

    The rotated table is computed once per distinct gate matrix and shared
    across blocks.
    """
    cache: dict[int, np.ndarray] = {}
    blocks = []
    covered = set()
    for support, U in layer.elements:
        key = id(U)
        if key not in cache:
            rot, _ = rotated_frame(U, table, minimize=minimize)
            cache[key] = rot.entries
        blocks.append((tuple(support), cache[key], U))
        covered.update(support)
    for q in range(layer.n):
        if q not in covered:
            blocks.append(((q,), table.entries, None))
    return FrameAssignment(layer.n, blocks)


def _block_column(gamma: np.ndarray, delta: np.ndarray, support) -> int:
    """Column index of the (gamma, delta) restriction to a block."""
    col = 0
    for q in support:
        col = 16 * col + 4 * int(gamma[q]) + int(delta[q])
    return col


# ---------------------------------------------------------------------------
# dual evaluation
# ---------------------------------------------------------------------------

def eval_G_stream(
    assign: FrameAssignment,
    gamma: PauliString,
    delta: PauliString,
    S: np.ndarray,
    R: np.ndarray,
) -> np.ndarray:
    """Dual products for a batch of snapshots; returns (shots,) complex."""
    glab, dlab = gamma.labels(), delta.labels()
    values = np.ones(S.shape[0], dtype=complex)
    for support, entries, _ in assign.blocks:
        col = _block_column(glab, dlab, support)
        q = len(support)
        r_joint = np.zeros(S.shape[0], dtype=np.int64)
        s_joint = np.zeros(S.shape[0], dtype=np.int64)
        for qubit in support:
            r_joint = 6 * r_joint + R[:, qubit]
            s_joint = 6 * s_joint + S[:, qubit]
        rows = pair_row_index(r_joint, s_joint, q)
        values *= entries[rows, col]
    return values


def eval_G(assign, gamma, delta, snapshot) -> complex:
    """Dual product for a single snapshot."""
    S = np.array([snapshot.s.indices], dtype=np.int64)
    R = np.array([snapshot.r.indices], dtype=np.int64)
    return complex(eval_G_stream(assign, gamma, delta, S, R)[0])


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

class _ExactSum:
    """Exact sum of float64 values, held as an integer multiple of 2^-1074.

    Float addition is not associative, so a merged pair of running sums
    would not be bit-identical to the sum of the concatenated stream.
    Accumulating the exact dyadic value (mantissa times power of two, an
    arbitrary-precision integer) makes accumulation and merging exactly
    associative; rounding happens once, in ``as_float``.
    """

    __slots__ = ("acc",)

    def __init__(self, acc: int = 0):
        self.acc = acc

    def add_array(self, values: np.ndarray) -> None:
        v = np.ascontiguousarray(values, dtype=np.float64)
        bits = v.view(np.int64)
        expo = (bits >> 52) & 0x7FF
        if (expo == 0x7FF).any():
            raise ValueError("cannot accumulate non-finite values")
        frac = bits & ((1 << 52) - 1)
        mant = np.where(expo == 0, frac, frac | (1 << 52))
        mant = np.where(bits < 0, -mant, mant)
        shift = np.maximum(expo, 1) - 1  # in units of 2^-1074
        for s in np.unique(shift):
            m = mant[shift == s]
            total = 0
            for i in range(0, m.size, 512):  # int64-safe partial sums
                total += int(m[i : i + 512].sum())
            self.acc += total << int(s)

    def merge(self, other: "_ExactSum") -> None:
        self.acc += other.acc

    def as_float(self, divisor: int = 1) -> float:
        from fractions import Fraction

        return float(Fraction(self.acc, divisor) / (1 << 1074))


@dataclass
class EstimatorAccumulator:
    """Mergeable accumulator for one process-matrix entry.

    ``mode="mean"`` keeps exact running sums, so any split of a stream,
    merged, yields bit-identical estimates.  ``mode="mom"`` fills blocks of
    ``block_size`` values in arrival order and estimates by the
    component-wise median of block means; accumulators merge when the left
    operand holds a whole number of blocks.
    """

    mode: str = "mean"
    block_size: int = 0
    count: int = 0
    sum_re: _ExactSum = field(default_factory=_ExactSum)
    sum_im: _ExactSum = field(default_factory=_ExactSum)
    block_means: list = field(default_factory=list)
    partial_re: _ExactSum = field(default_factory=_ExactSum)
    partial_im: _ExactSum = field(default_factory=_ExactSum)
    partial_count: int = 0

    def add(self, values: np.ndarray) -> None:
        values = np.atleast_1d(np.asarray(values, dtype=complex))
        self.count += values.size
        self.sum_re.add_array(values.real)
        self.sum_im.add_array(values.imag)
        if self.mode != "mom":
            return
        b = self.block_size
        pos = 0
        while pos < values.size:
            take = min(b - self.partial_count, values.size - pos)
            chunk = values[pos : pos + take]
            self.partial_re.add_array(chunk.real)
            self.partial_im.add_array(chunk.imag)
            self.partial_count += take
            pos += take
            if self.partial_count == b:
                self.block_means.append(
                    complex(self.partial_re.as_float(b), self.partial_im.as_float(b))
                )
                self.partial_re = _ExactSum()
                self.partial_im = _ExactSum()
                self.partial_count = 0

    def merge(self, other: "EstimatorAccumulator") -> None:
        if self.mode != other.mode or self.block_size != other.block_size:
            raise ValueError("accumulator modes differ")
        if self.mode == "mom" and self.partial_count and other.count:
            raise ValueError("MoM accumulators merge only at block boundaries")
        self.count += other.count
        self.sum_re.merge(other.sum_re)
        self.sum_im.merge(other.sum_im)
        self.block_means.extend(other.block_means)
        self.partial_re.merge(other.partial_re)
        self.partial_im.merge(other.partial_im)
        self.partial_count += other.partial_count

    def estimate(self) -> complex:
        if self.count == 0:
            raise ValueError("no data accumulated")
        if self.mode != "mom" or not self.block_means:
            return complex(
                self.sum_re.as_float(self.count), self.sum_im.as_float(self.count)
            )
        means = np.array(self.block_means)
        return complex(np.median(means.real) + 1j * np.median(means.imag))


def estimate_entries(
    assign: FrameAssignment,
    entries,
    S: np.ndarray,
    R: np.ndarray,
    mode: str = "mean",
    block_size: int = 0,
) -> dict:
    """Estimate several chi entries from one snapshot batch."""
    if S.shape[0] == 0:
        raise ValueError("empty snapshot stream")
    out = {}
    for gamma, delta in entries:
        acc = EstimatorAccumulator(mode=mode, block_size=block_size)
        acc.add(eval_G_stream(assign, gamma, delta, S, R))
        out[(gamma, delta)] = acc.estimate()
    return out


# ---------------------------------------------------------------------------
# sample planning
# ---------------------------------------------------------------------------

@dataclass
class SamplePlan:
    variance_bound: float
    epsilon: float
    delta: float
    b: int
    k_blocks: int
    M: int


def mom_plan(
    variance_bound: float,
    epsilon: float,
    delta: float,
    D: int | None = None,
) -> tuple[SamplePlan, dict]:
    """Median-of-means budget: b = ceil(34 Var / eps^2), K = ceil(2 ln(2/delta)).

    The returned dict also holds the all-entries budget (the log argument
    gains a factor D) and the l2-norm budget (that total times D), both
    requiring ``D``.
    """
    if epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    b = math.ceil(34.0 * variance_bound / epsilon**2)
    k = math.ceil(2.0 * math.log(2.0 / delta))
    plan = SamplePlan(variance_bound, epsilon, delta, b, k, b * k)
    budgets = {"entry": plan.M}
    if D is not None:
        k_all = math.ceil(2.0 * math.log(2.0 * D / delta))
        budgets["all_entries"] = b * k_all
        budgets["l2"] = D * b * k_all
    return plan, budgets


# ---------------------------------------------------------------------------
# analytic variance
# ---------------------------------------------------------------------------

def _deinterleave_columns(flat: np.ndarray, q: int) -> np.ndarray:
    """Column vector over interleaved label pairs -> (4^q, 4^q) over (a, b)."""
    if q == 1:
        return flat.reshape(4, 4)
    return flat.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(16, 16)


def analytic_variance(
    chi: ProcessMatrix,
    assign: FrameAssignment,
    gamma: PauliString,
    delta: PauliString,
    bound_only: bool = False,
) -> float:
    """Exact estimator variance under a block-product channel model.

    Computes ``E|G|^2 = sum_AB chi_AB prod_blocks t_b(A_b, B_b)`` where the
    per-block factor sums |g|^2 against the (gate-sandwiched) statistics
    table, then subtracts ``|chi_gd|^2`` (skipped with ``bound_only``,
    giving the second-moment upper bound).  Per-block tables are cached, so
    the cost is O(D^2 n).
    """
    glab, dlab = gamma.labels(), delta.labels()
    index = chi.index
    labels = index.label_matrix()
    product = np.ones((index.D, index.D), dtype=complex)
    f_cache: dict = {}
    for support, entries, U in assign.blocks:
        q = len(support)
        key = "plain%d" % q if U is None else id(U)
        if key not in f_cache:
            f_cache[key] = build_f(q) if U is None else rotated_f(U)
        f_tab = f_cache[key]
        col = _block_column(glab, dlab, support)
        w = np.abs(entries[:, col]) ** 2
        t_flat = w @ f_tab.entries  # (16^q,)
        t_b = _deinterleave_columns(t_flat, q)
        restr = np.zeros(index.D, dtype=np.int64)
        for qubit in support:
            restr = 4 * restr + labels[:, qubit]
        product *= t_b[np.ix_(restr, restr)]
    second_moment = float(np.sum(chi.entries * product).real)
    if bound_only:
        return second_moment
    target = chi.entry(gamma, delta)
    return second_moment - abs(target) ** 2


class _BlockFactorCache:
    """Per-block second-moment tables, keyed by the dual column used."""

    def __init__(self, assign: FrameAssignment):
        self.assign = assign
        self._f = {}
        self._t = {}

    def factor(self, block_idx: int, col: int) -> np.ndarray:
        key = (block_idx, col)
        if key not in self._t:
            support, entries, U = self.assign.blocks[block_idx]
            q = len(support)
            fkey = "plain%d" % q if U is None else (id(U), q)
            if fkey not in self._f:
                self._f[fkey] = build_f(q) if U is None else rotated_f(U)
            w = np.abs(entries[:, col]) ** 2
            self._t[key] = _deinterleave_columns(w @ self._f[fkey].entries, q)
        return self._t[key]


def analytic_variance_exact(
    channel: ChannelModel,
    assign: FrameAssignment,
    gamma: PauliString,
    delta: PauliString,
    bound_only: bool = False,
    _cache: _BlockFactorCache | None = None,
) -> float:
    """Exact estimator variance when noise and frames share a block structure.

    For block-product channels both moments factor completely,
    ``E|G|^2 = prod_b sum_ab chi_b[a, b] t_b[a, b]`` with chi_b the exact
    block process matrix, so no degree truncation enters and the cost is
    O(n) per entry.  Channel noise blocks must each lie inside one frame
    block (per-site noise always does).
    """
    site_chi = {}
    for support, kraus in channel.blocks:
        site_chi[tuple(support)] = block_chi(kraus, len(support))
    ident = np.zeros((4, 4), dtype=complex)
    ident[0, 0] = 1.0
    glab, dlab = gamma.labels(), delta.labels()
    cache = _cache if _cache is not None else _BlockFactorCache(assign)
    second = 1.0
    target = 1.0 + 0.0j
    for bi, (support, entries, U) in enumerate(assign.blocks):
        q = len(support)
        if tuple(support) in site_chi:
            bchi = site_chi[tuple(support)]
        elif q == 2:
            parts = []
            for qb in support:
                if (qb,) in site_chi:
                    parts.append(site_chi[(qb,)])
                else:
                    parts.append(ident)
            bchi = np.kron(parts[0], parts[1])
        elif q == 1:
            bchi = ident
        else:
            raise ValueError("channel blocks do not fit the frame blocks")
        col = _block_column(glab, dlab, support)
        t_b = cache.factor(bi, col)
        second *= float(np.sum(bchi * t_b).real)
        restr_g = 0
        restr_d = 0
        for qb in support:
            restr_g = 4 * restr_g + int(glab[qb])
            restr_d = 4 * restr_d + int(dlab[qb])
        target *= bchi[restr_g, restr_d]
    if bound_only:
        return float(second)
    return float(second - abs(target) ** 2)


# ---------------------------------------------------------------------------
# running-mean convergence
# ---------------------------------------------------------------------------

def convergence_samples(
    chunks,
    truth: complex,
    epsilon: float,
    window: int,
    cap: int = 10**6,
):
    """First shot count after which |running mean - truth| < eps held for
    ``window`` consecutive updates.

    ``chunks`` yields numpy arrays of estimator values; iteration stops at
    ``cap`` total samples and returns None (censored) if the window was
    never completed.
    """
    total = 0
    running_sum = 0.0 + 0.0j
    run = 0
    for values in chunks:
        values = np.asarray(values, dtype=complex)
        if total + values.size > cap:
            values = values[: cap - total]
        if values.size == 0:
            break
        means = (running_sum + np.cumsum(values)) / (
            total + np.arange(1, values.size + 1)
        )
        ok = np.abs(means - truth) < epsilon
        hit, run = _first_window(ok, window, run)
        if hit is not None:
            return total + hit + 1
        running_sum += complex(values.sum())
        total += values.size
        if total >= cap:
            break
    return None


def _first_window(ok: np.ndarray, window: int, carry: int):
    """First index completing ``window`` consecutive True, given a carry-in
    run length; returns (index | None, carry-out)."""
    if not ok.size:
        return None, carry
    idx = np.arange(ok.size)
    last_false = np.maximum.accumulate(np.where(~ok, idx, -1))
    runs = np.where(last_false < 0, idx + 1 + carry, idx - last_false)
    hits = np.nonzero(runs >= window)[0]
    if hits.size:
        return int(hits[0]), 0
    new_carry = int(runs[-1]) if ok[-1] else 0
    return None, new_carry
