"""Measurement-frame tables, their kernels, and variance-minimizing inverses.

The single-qubit table ``f`` maps a prepared eigenstate ``s`` and a measured
eigenstate ``r`` to ``f_ab(r, s) = <r|sigma_a|s><s|sigma_b|r> / 18``.  A dual
table ``g`` is any table satisfying the biorthogonality identity

    sum_{r,s} g_cd(r, s) f_ab(r, s) = delta_ca delta_db          (all a, b)

so that averaging ``g`` over measurement snapshots linearly inverts the
statistics into process-matrix entries.  This module builds the shadow dual,
the variance-minimizing dual (closed form and solver), and gate-rotated duals
that undo an ideal one- or two-qubit unitary in post-processing.

Index conventions (shared with the rest of the package):

* state-pair row index at arity 1: ``6*r + s``; at arity 2 the per-qubit
  pairs are interleaved, ``36*(6*r0 + s0) + (6*r1 + s1)``, which makes the
  arity-2 tables exact Kronecker products of arity-1 tables;
* label-pair column index at arity 1: ``4*a + b``; at arity 2:
  ``16*(4*a0 + b0) + (4*a1 + b1)``.
"""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .pauli import (
    SIGMA,
    STATE_PROJECTORS,
    STATE_VECTORS,
    labels_commute,
    levi_civita,
)

IDENTITY_TOL = 1e-10
CONSTRUCTION_TOL = 1e-12
SOLVER_TOL = 1e-8

#: Kernel dimensions forced by the table shapes: 36 - 16 and 36^2 - 16^2.
KERNEL_DIM = {1: 20, 2: 1040}

#: Single-qubit dual-frame operators 3|s><s| - 1.
DUAL_OPS = 3.0 * STATE_PROJECTORS - np.eye(2)


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------

ISWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex
)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
T_GATE = np.diag([1.0, np.exp(1j * np.pi / 4)]).astype(complex)

GATES = {
    "iswap": ISWAP,
    "cnot": CNOT,
    "cz": CZ,
    "swap": SWAP,
    "t": T_GATE,
    "identity1": np.eye(2, dtype=complex),
    "identity2": np.eye(4, dtype=complex),
    "t1": np.kron(T_GATE, np.eye(2)),
    "tt": np.kron(T_GATE, T_GATE),
}


def check_unitary(U: np.ndarray, tol: float = IDENTITY_TOL) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1] or U.shape[0] not in (2, 4):
        raise ValueError(f"expected a 2x2 or 4x4 matrix, got shape {U.shape}")
    err = np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()
    if err > tol:
        raise ValueError(f"matrix is not unitary (deviation {err:.2e})")
    return U


def load_unitary(path) -> np.ndarray:
    """Read a unitary from a text file of whitespace-separated "re im" pairs."""
    vals = np.loadtxt(path).reshape(-1, 2)
    flat = vals[:, 0] + 1j * vals[:, 1]
    dim = math.isqrt(flat.size)
    if dim * dim != flat.size or dim not in (2, 4):
        raise ValueError(f"file holds {flat.size} entries, not a 2x2/4x4 matrix")
    return check_unitary(flat.reshape(dim, dim))


# ---------------------------------------------------------------------------
# index helpers
# ---------------------------------------------------------------------------

def product_states(arity: int) -> np.ndarray:
    """(6^arity, 2^arity) array of product eigenstate vectors."""
    out = np.array([[1.0 + 0j]])
    for _ in range(arity):
        out = np.stack(
            [np.kron(v, STATE_VECTORS[i]) for v in out for i in range(6)]
        )
    return out


def pair_row_index(r, s, arity: int):
    """Row index of measured/prepared product-state indices (vectorized).

    ``r`` and ``s`` are joint state indices in ``range(6**arity)`` with the
    first qubit as the most significant digit.
    """
    r = np.asarray(r)
    s = np.asarray(s)
    if arity == 1:
        return 6 * r + s
    r0, r1 = r // 6, r % 6
    s0, s1 = s // 6, s % 6
    return 36 * (6 * r0 + s0) + 6 * r1 + s1


def interleave_state_matrix(M: np.ndarray, arity: int) -> np.ndarray:
    """Reorder a (6^a, 6^a) matrix over (r, s) into the row-index vector."""
    if arity == 1:
        return M.reshape(36)
    return M.reshape(6, 6, 6, 6).transpose(0, 2, 1, 3).reshape(1296)


def interleave_label_matrix(C: np.ndarray, arity: int) -> np.ndarray:
    """Reorder a (4^a, 4^a) matrix over (alpha, beta) into the column vector."""
    if arity == 1:
        return C.reshape(16)
    return C.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(256)


# ---------------------------------------------------------------------------
# frame tables
# ---------------------------------------------------------------------------

@dataclass
class FrameTable:
    """A complex (36^arity, 16^arity) table of frame or dual-frame values."""

    arity: int
    kind: str
    entries: np.ndarray
    unitary: np.ndarray | None = None

    def __post_init__(self):
        expected = (36**self.arity, 16**self.arity)
        if self.entries.shape != expected:
            raise ValueError(f"entries shape {self.entries.shape} != {expected}")

    def column(self, gamma_delta: int) -> np.ndarray:
        return self.entries[:, gamma_delta]


@dataclass
class KernelBasis:
    """Orthonormal basis of the left null space of an f table."""

    arity: int
    rows: np.ndarray  # (k, 36^arity), rows @ f == 0

    @property
    def dim(self) -> int:
        return self.rows.shape[0]


@dataclass
class MinimizationResult:
    g_opt: np.ndarray  # optimized column, length 36^arity
    objective: float
    entry: int  # column (gamma, delta) index
    x: np.ndarray  # kernel coefficients


@dataclass
class DualFrameExpansion:
    """Expansion of back-rotated projectors over the product-state frame.

    ``u[t, s]`` is the coefficient of ``|t><t|`` in the expansion of
    ``U^dag |s><s| U``, computed with the canonical tensor-product dual
    ``(3|t_i><t_i| - 1)/3`` per qubit, so that
    ``sum_t u[t, s] |t><t| = U^dag |s><s| U`` exactly.
    """

    unitary: np.ndarray
    u: np.ndarray


def build_f(arity: int) -> FrameTable:
    """The measurement-statistics table f at arity 1 or 2.

    At arity 1, ``f_ab(r, s) = <r|sigma_a|s><s|sigma_b|r> / 18``; the arity-2
    table is the Kronecker product of two arity-1 tables.
    """
    if arity not in (1, 2):
        raise ValueError("arity must be 1 or 2")
    amps = np.einsum("ri,aij,sj->ars", STATE_VECTORS.conj(), SIGMA, STATE_VECTORS)
    # <s|sigma_b|r> = conj(<r|sigma_b|s>) since sigma_b is Hermitian
    f1 = np.einsum("ars,brs->rsab", amps, amps.conj()).reshape(36, 16) / 18.0
    if arity == 1:
        return FrameTable(1, "f", f1)
    return FrameTable(2, "f", np.kron(f1, f1))


def build_g_shadow() -> FrameTable:
    """The arity-1 shadow-tomography dual table.

    Entries are ``g_cd(r, s) = <phi_c| D_r (x) D_s^T |phi_d>`` with
    ``D_t = 3|t><t| - 1`` and ``|phi_c> = (sigma_c (x) 1)|phi+>``; the
    transpose on the prepared side carries the Choi-state input convention.
    Satisfies the biorthogonality identity exactly.
    """
    phi = np.zeros(4, dtype=complex)
    phi[0] = phi[3] = 1.0 / math.sqrt(2.0)
    phis = np.stack([np.kron(SIGMA[c], np.eye(2)) @ phi for c in range(4)])
    g = np.zeros((36, 16), dtype=complex)
    for r in range(6):
        for s in range(6):
            DD = np.kron(DUAL_OPS[r], DUAL_OPS[s].T)
            block = phis.conj() @ DD @ phis.T  # [c, d]
            g[6 * r + s] = block.reshape(16)
    return FrameTable(1, "g_shadow", g)


def g_min_closed_form() -> FrameTable:
    """The variance-minimizing arity-1 dual table, from its closed form.

    The case structure below reproduces the output of ``minimize_frame``
    started from the shadow table with weight ``f_00`` (minimum-norm
    convention), for every entry; equality is enforced by tests.  Writing
    b(r) for the basis axis of r (as a Pauli label) and e(r) for its
    eigenbit, with rbar(s) meaning "same basis, opposite eigenbit":

    * (0,0): -7/2 on r = sbar, 1 otherwise.
    * (a,a): on r = sbar, +9/2 when b(r) anticommutes with a and -9/2 when
      b(r) = a; 0 otherwise.
    * (a,b), distinct non-identity: (-1)^(e(r)+e(s)) * 9/4 when the state
      bases are {a, b}; eps_{ab,b(r)} * (-1)^e(s) * 9i/2 when both states
      sit on the remaining axis with opposite eigenbits; 0 otherwise.
    * (0,a): eps_{b(s) b(r) a} * (-1)^(e(r)+e(s)) * 9i/4 when neither state
      basis equals a; otherwise (-1)^e(r) * 9/10 if b(r) = a plus
      (-1)^e(s) * 9/10 if b(s) = a, halved when both equal a.
    * (a,0): complex conjugate of (0,a), completing the conjugation
      symmetry g_dc = conj(g_cd).
    """
    g = np.zeros((36, 16), dtype=complex)
    for r in range(6):
        br, er = r // 2 + 1, r % 2  # basis as Pauli label 1..3, eigenbit
        for s in range(6):
            bs, es = s // 2 + 1, s % 2
            conj_pair = br == bs and er != es
            for c in range(4):
                for d in range(4):
                    if c == 0 and d == 0:
                        val = -3.5 if conj_pair else 1.0
                    elif c == d:
                        if conj_pair:
                            val = 4.5 if not labels_commute(br, c) else -4.5
                        else:
                            val = 0.0
                    elif c != 0 and d != 0:
                        third = 6 - c - d
                        if {br, bs} == {c, d}:
                            val = (-1) ** (er + es) * 2.25
                        elif br == bs == third and er != es:
                            val = levi_civita(c, d, third) * (-1) ** es * 4.5j
                        else:
                            val = 0.0
                    else:  # exactly one identity label
                        a = c + d
                        if br != a and bs != a:
                            val = (
                                levi_civita(bs, br, a)
                                * (-1) ** (er + es)
                                * 2.25j
                            )
                        else:
                            val = 0.0
                            if br == a:
                                val += (-1) ** er * 0.9
                            if bs == a:
                                val += (-1) ** es * 0.9
                            if br == a and bs == a:
                                val *= 0.5
                        if d == 0:  # (a, 0) is the conjugate of (0, a)
                            val = np.conj(val)
                    g[6 * r + s, 4 * c + d] = val
    return FrameTable(1, "g_min", g)


def left_kernel(f: FrameTable) -> KernelBasis:
    """Orthonormal basis of the left null space of f (20 or 1040 rows)."""
    if f.kind != "f":
        raise ValueError("left_kernel expects an f table")
    U, sing, _ = np.linalg.svd(f.entries)
    ncols = f.entries.shape[1]
    rank = int((sing > 1e-10 * sing[0]).sum())
    if rank != ncols:
        raise ValueError(
            f"f table is rank deficient ({rank} < {ncols}); numerical degeneracy"
        )
    rows = U[:, ncols:].conj().T
    assert rows.shape[0] == KERNEL_DIM[f.arity]
    return KernelBasis(f.arity, rows)


def _weighted_min_norm(kernel_rows, weight, rhs):
    """Minimum-norm solution of min_x || sqrt(w) (rhs + K^T x) ||^2.

    The complex least-squares problem is equivalent to the real problem of
    doubled dimension; numpy's lstsq handles it directly and returns the
    minimum-norm coefficient vector when the weighted system is degenerate.
    """
    w = np.asarray(weight, dtype=float)
    if w.min() < 0:
        raise ValueError("weight must be nonnegative")
    sw = np.sqrt(w)
    A = sw[:, None] * kernel_rows.T
    B = -(sw[:, None] * rhs) if rhs.ndim == 2 else -(sw * rhs)[:, None]
    x, _, _, _ = np.linalg.lstsq(A, B if B.ndim == 2 else B[:, None], rcond=None)
    return x


def minimize_frame(
    g_init: np.ndarray,
    kernel: KernelBasis,
    weight: np.ndarray,
    entry: int,
) -> MinimizationResult:
    """Minimize the weighted quadratic over the kernel family of one entry.

    Finds argmin_x of ``sum_rows weight * |g_init + x^T K|^2`` and returns
    the optimized column together with the objective.  On degenerate normal
    equations (zero-weight rows) the minimum-norm x is chosen.
    """
    x = _weighted_min_norm(kernel.rows, weight, np.asarray(g_init))[:, 0]
    g_opt = g_init + kernel.rows.T @ x
    objective = float(np.sum(weight * np.abs(g_opt) ** 2))
    return MinimizationResult(g_opt, objective, entry, x)


def minimize_table(
    g: FrameTable, kernel: KernelBasis, weight: np.ndarray, kind: str
) -> tuple[FrameTable, np.ndarray]:
    """Minimize every column of a table against a common weight.

    Shares one factorization across the 16^arity right-hand sides; returns
    the optimized table and the per-entry objectives.
    """
    x = _weighted_min_norm(kernel.rows, weight, g.entries)
    entries = g.entries + kernel.rows.T @ x
    objectives = np.sum(weight[:, None] * np.abs(entries) ** 2, axis=0).real
    return FrameTable(g.arity, kind, entries, unitary=g.unitary), objectives


def g_min_solver() -> tuple[FrameTable, np.ndarray]:
    """Arity-1 minimized dual straight from the solver (shadow anchor)."""
    f = build_f(1)
    kernel = left_kernel(f)
    table, objectives = minimize_table(
        build_g_shadow(), kernel, f.entries[:, 0].real, "g_min"
    )
    return table, objectives


def frame_identity_residual(g: FrameTable, f: FrameTable) -> float:
    """Max deviation of sum_rows g_cd f_ab from delta_ca delta_db.

    For rotated tables pass the matching rotated f (see ``rotated_f``).
    """
    dim = 16**g.arity
    return float(np.abs(g.entries.T @ f.entries - np.eye(dim)).max())


def variance_constant(
    g: FrameTable, f: FrameTable, tol: float = IDENTITY_TOL
) -> tuple[float, np.ndarray, float]:
    """Scan sum_rows |g_cd|^2 f_ab over all entry pairs.

    Returns ``(C, scan, offdiag)`` where ``scan[cd, ab]`` is the full table,
    ``C`` is the largest real-positive value (they occur on the diagonal
    a = b), and ``offdiag`` is the largest magnitude over a != b entries,
    which should vanish for duals satisfying the decoupling property; a
    violation is reported by the caller, not fatal here.
    """
    if g.arity != f.arity:
        raise ValueError("arity mismatch")
    scan = (np.abs(g.entries) ** 2).T @ f.entries
    nlab = 4**g.arity
    diag_cols = [nlab * a + a for a in range(nlab)]
    real_positive = scan[:, diag_cols].real
    off = np.delete(scan, diag_cols, axis=1)
    offdiag = float(np.abs(off).max()) if off.size else 0.0
    return float(real_positive.max()), scan, offdiag


# ---------------------------------------------------------------------------
# gate rotation
# ---------------------------------------------------------------------------

def dual_frame_expansion(U: np.ndarray) -> DualFrameExpansion:
    """Expand every back-rotated projector over the product-state frame.

    ``u[t, s] = Tr[ (x)_i (3|t_i><t_i| - 1) . U^dag |s><s| U ] / 3^q``; the
    reconstruction identity is verified before returning.
    """
    U = check_unitary(U)
    q = 1 if U.shape[0] == 2 else 2
    states = product_states(q)
    projs = np.einsum("si,sj->sij", states, states.conj())
    duals = _product_duals(q)
    back = np.einsum("ab,sbc,cd->sad", U.conj().T, projs, U)
    u = np.einsum("tij,sji->ts", duals, back) / 3.0**q
    recon = np.einsum("ts,tij->sij", u, projs)
    err = np.abs(recon - back).max()
    if err > CONSTRUCTION_TOL:
        raise ValueError(f"dual-frame reconstruction failed (residual {err:.2e})")
    return DualFrameExpansion(U, u)


def _product_duals(q: int) -> np.ndarray:
    out = DUAL_OPS
    for _ in range(q - 1):
        out = np.stack([np.kron(a, b) for a in out for b in DUAL_OPS])
    return out


def gate_weight(U: np.ndarray) -> np.ndarray:
    """Sampling weight of the ideal gate, p_U(r, s) = |<r|U|s>|^2 / 18^q.

    Returned in frame-row order (interleaved per-qubit pairs).
    """
    U = check_unitary(U)
    q = 1 if U.shape[0] == 2 else 2
    states = product_states(q)
    P = np.abs(states.conj() @ U @ states.T) ** 2 / 18.0**q
    return interleave_state_matrix(P, q)


def rotated_f(U: np.ndarray) -> FrameTable:
    """The gate-sandwiched statistics table.

    ``fU_ab(r, s) = <r|sigma_a U |s><s| U^dag sigma_b|r> / 18^q`` describes
    the measurement statistics when the ideal gate acts before a channel;
    its (0, 0) column equals ``gate_weight``.  Rotated duals satisfy the
    biorthogonality identity against this table.
    """
    U = check_unitary(U)
    q = 1 if U.shape[0] == 2 else 2
    states = product_states(q)
    projs = np.einsum("si,sj->sij", states, states.conj())
    fwd = np.einsum("ab,sbc,cd->sad", U, projs, U.conj().T)
    paulis = _product_paulis(q)
    sand = np.einsum(
        "ri,aij,sjk,bkl,rl->rsab", states.conj(), paulis, fwd, paulis, states
    ) / 18.0**q
    if q == 1:
        entries = sand.reshape(36, 16)
    else:
        entries = (
            sand.reshape(6, 6, 6, 6, 4, 4, 4, 4)
            .transpose(0, 2, 1, 3, 4, 6, 5, 7)
            .reshape(1296, 256)
        )
    return FrameTable(q, "f", entries, unitary=U)


def _product_paulis(q: int) -> np.ndarray:
    out = SIGMA
    for _ in range(q - 1):
        out = np.stack([np.kron(a, b) for a in out for b in SIGMA])
    return out


def rotated_frame(
    U: np.ndarray,
    g1: FrameTable,
    minimize: bool = True,
) -> tuple[FrameTable, np.ndarray | None]:
    """Precompose a product dual with the inverse of an ideal gate.

    Builds the product table over the gate's qubits and contracts it with
    the dual-frame expansion,

        gU_cd(r, t) = sum_s u[t, s] * prod_i g_{c_i d_i}(r_i, s_i),

    so that averaging gU over data sampled from (noise after gate) targets
    the noise alone.  The index placement of u (the data state enters the
    expansion slot) is the one validated by the unbiasedness oracle at
    n = 2.  With ``minimize=True`` every entry is then minimized over the
    kernel family against the gate weight ``p_U`` and the per-entry
    objectives are returned (1 exactly for Clifford gates).
    """
    if g1.arity != 1:
        raise ValueError("rotated_frame expects an arity-1 dual table")
    U = check_unitary(U)
    q = 1 if U.shape[0] == 2 else 2
    gq = g1.entries if q == 1 else np.kron(g1.entries, g1.entries)
    u = dual_frame_expansion(U).u
    if q == 1:
        rotated = np.einsum("rsk,ts->rtk", gq.reshape(6, 6, -1), u).reshape(36, -1)
    else:
        rotated = np.einsum(
            "asbtk,uvst->aubvk",
            gq.reshape(6, 6, 6, 6, -1),
            u.reshape(6, 6, 6, 6),
        ).reshape(1296, -1)
    table = FrameTable(q, "g_rotated", rotated, unitary=U)
    if not minimize:
        return table, None
    kernel = left_kernel(build_f(q))
    weight = gate_weight(U)
    table, objectives = minimize_table(table, kernel, weight, "g_rotated_min")
    return table, objectives


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_frame(table: FrameTable, path) -> None:
    """Write a frame table as JSON ({arity, kind, unitary?, entries}).

    Entries are row-major [re, im] pairs; ``.gz`` paths are gzip-compressed.
    """
    doc = {
        "arity": table.arity,
        "kind": table.kind,
        "entries": [
            [float(z.real), float(z.imag)] for z in table.entries.reshape(-1)
        ],
    }
    if table.unitary is not None:
        doc["unitary"] = [
            [float(z.real), float(z.imag)] for z in table.unitary.reshape(-1)
        ]
    text = json.dumps(doc)
    path = str(path)
    if path.endswith(".gz"):
        with gzip.open(path, "wt") as fh:
            fh.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def load_frame(path) -> FrameTable:
    path = str(path)
    if path.endswith(".gz"):
        with gzip.open(path, "rt") as fh:
            doc = json.load(fh)
    else:
        with open(path) as fh:
            doc = json.load(fh)
    arity = int(doc["arity"])
    flat = np.array([complex(re, im) for re, im in doc["entries"]])
    entries = flat.reshape(36**arity, 16**arity)
    unitary = None
    if "unitary" in doc:
        uf = np.array([complex(re, im) for re, im in doc["unitary"]])
        dim = math.isqrt(uf.size)
        unitary = uf.reshape(dim, dim)
    return FrameTable(arity, doc["kind"], entries, unitary=unitary)
