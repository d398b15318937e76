"""Error-channel models, process matrices, and truncation-error bounds.

Channels are stored as lists of blocks, each block holding a Kraus list on
one or two qubits (a dense Kraus list on up to four qubits is a single
block).  A noisy gate layer is modeled as the ideal layer followed by the
noise, so composing merges each gate into its block as ``K . U``.  The
process matrix chi of a block-product channel factorizes over blocks,
``chi_AB = prod_b chi_b[A_b, B_b]``, which is what makes desk-scale exact
computations possible at a hundred qubits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .pauli import (
    I,
    X,
    PauliString,
    LowDegreeIndex,
    SIGMA,
    low_degree_index,
)

HERMITICITY_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
COMPLETENESS_TOL = 1e-10

CHI_CSV_SCHEMA = "chi.v1"


def _product_paulis(q: int) -> np.ndarray:
    out = SIGMA
    for _ in range(q - 1):
        out = np.stack([np.kron(a, b) for a in out for b in SIGMA])
    return out


# ---------------------------------------------------------------------------
# channel models
# ---------------------------------------------------------------------------

@dataclass
class ChannelModel:
    """A channel given as a product of independent Kraus blocks.

    ``blocks`` holds ``(support, kraus)`` pairs with pairwise-disjoint qubit
    supports covering a subset of ``range(n)``; uncovered qubits act as
    identity.  Completeness ``sum_k K^dag K <= 1`` is checked per block on
    construction (equality for trace-preserving blocks).
    """

    n: int
    blocks: list
    declared_degree: int = 1

    def __post_init__(self):
        seen = set()
        for support, kraus in self.blocks:
            if any(q in seen for q in support):
                raise ValueError("overlapping block supports")
            seen.update(support)
            dim = 2 ** len(support)
            acc = np.zeros((dim, dim), dtype=complex)
            for K in kraus:
                if K.shape != (dim, dim):
                    raise ValueError("Kraus operator shape mismatch")
                acc += K.conj().T @ K
            ev = np.linalg.eigvalsh(acc)
            if ev.max() > 1 + COMPLETENESS_TOL:
                raise ValueError(
                    f"invalid channel: sum K^dag K exceeds identity by {ev.max()-1:.2e}"
                )

    @property
    def trace_preserving(self) -> bool:
        for support, kraus in self.blocks:
            dim = 2 ** len(support)
            acc = sum(K.conj().T @ K for K in kraus)
            if np.abs(acc - np.eye(dim)).max() > COMPLETENESS_TOL:
                return False
        return True

    def block_for(self, qubit: int):
        for support, kraus in self.blocks:
            if qubit in support:
                return support, kraus
        return (qubit,), [np.eye(2, dtype=complex)]


def kraus_list(n: int, operators, declared_degree: int = 1) -> ChannelModel:
    """A dense n-qubit Kraus list as a single block (n <= 4)."""
    if n > 4:
        raise ValueError("dense Kraus lists are limited to n <= 4")
    ops = [np.asarray(K, dtype=complex) for K in operators]
    return ChannelModel(n, [(tuple(range(n)), ops)], declared_degree)


def site_product(per_site_kraus, declared_degree: int = 1) -> ChannelModel:
    """A tensor product of single-qubit channels, one Kraus list per qubit."""
    blocks = [
        ((q,), [np.asarray(K, dtype=complex) for K in kraus])
        for q, kraus in enumerate(per_site_kraus)
    ]
    return ChannelModel(len(per_site_kraus), blocks, declared_degree)


@dataclass
class CoefficientChannel:
    """A channel given by Pauli coefficients of its Kraus operators.

    ``coeffs[k, j]`` is the coefficient of ``strings[j]`` in the expansion
    of the k-th Kraus operator; nothing of size 2^n is ever materialized.
    """

    n: int
    strings: list
    coeffs: np.ndarray
    declared_degree: int = 1


@dataclass
class GateLayer:
    """A layer of disjoint one- or two-qubit unitaries."""

    n: int
    elements: list  # (support tuple, unitary)

    def __post_init__(self):
        seen = set()
        for support, U in self.elements:
            if len(support) not in (1, 2) or len(set(support)) != len(support):
                raise ValueError(f"bad gate support {support}")
            if any(q in seen or not 0 <= q < self.n for q in support):
                raise ValueError("overlapping or out-of-range gate supports")
            seen.update(support)
            dim = 2 ** len(support)
            if np.abs(U.conj().T @ U - np.eye(dim)).max() > 1e-10:
                raise ValueError("layer element is not unitary")

    def unitary_for(self, support):
        for sup, U in self.elements:
            if tuple(sup) == tuple(support):
                return U
        return None


def iswap_layer(n: int) -> GateLayer:
    """Nearest-neighbour iSWAP pairs (0,1), (2,3), ..."""
    from .frames import ISWAP

    if n % 2:
        raise ValueError("iswap_layer needs an even qubit count")
    return GateLayer(n, [((q, q + 1), ISWAP) for q in range(0, n, 2)])


def gate_pair_layer(n: int, U: np.ndarray) -> GateLayer:
    """The same two-qubit unitary on every nearest-neighbour pair."""
    if n % 2:
        raise ValueError("gate_pair_layer needs an even qubit count")
    return GateLayer(n, [((q, q + 1), U) for q in range(0, n, 2)])


def single_gate_layer(n: int, support, U: np.ndarray) -> GateLayer:
    return GateLayer(n, [(tuple(support), U)])


def compose_with_layer(channel: ChannelModel, layer: GateLayer | None) -> ChannelModel:
    """The noisy implementation of a layer: ideal gates, then the noise.

    Requires the channel blocks to be compatible with the gate supports
    (single-qubit noise merges into any gate; larger noise blocks must
    coincide with a gate support or avoid the layer entirely).
    """
    if layer is None:
        return channel
    if layer.n != channel.n:
        raise ValueError("layer and channel qubit counts differ")
    site = {}
    for support, kraus in channel.blocks:
        if len(support) != 1:
            raise ValueError(
                "compose_with_layer expects single-qubit noise blocks"
            )
        site[support[0]] = kraus
    ident = [np.eye(2, dtype=complex)]
    blocks = []
    covered = set()
    for support, U in layer.elements:
        covered.update(support)
        lists = [site.get(q, ident) for q in support]
        if len(support) == 1:
            kraus = [K @ U for K in lists[0]]
        else:
            kraus = [np.kron(Ka, Kb) @ U for Ka in lists[0] for Kb in lists[1]]
        blocks.append((tuple(support), kraus))
    for q in range(channel.n):
        if q not in covered and q in site:
            blocks.append(((q,), site[q]))
    return ChannelModel(channel.n, blocks, channel.declared_degree)


# ---------------------------------------------------------------------------
# process matrices
# ---------------------------------------------------------------------------

@dataclass
class ProcessMatrix:
    """Hermitian PSD matrix chi over a low-degree string set."""

    index: LowDegreeIndex
    entries: np.ndarray
    residual: float = 0.0

    @property
    def D(self) -> int:
        return self.index.D

    def entry(self, alpha: PauliString, beta: PauliString) -> complex:
        return complex(
            self.entries[self.index.index_of(alpha), self.index.index_of(beta)]
        )

    def validate(self) -> None:
        h_err = np.abs(self.entries - self.entries.conj().T).max()
        if h_err > HERMITICITY_TOL:
            raise ValueError(f"chi not Hermitian (deviation {h_err:.2e})")
        ev = np.linalg.eigvalsh(self.entries)
        if ev.min() < -PSD_TOL:
            raise ValueError(f"chi not PSD (min eigenvalue {ev.min():.2e})")
        tr = self.entries.trace().real
        if tr > 1 + TRACE_TOL:
            raise ValueError(f"chi trace {tr} exceeds 1")


def block_coefficients(kraus, q: int) -> np.ndarray:
    """Pauli coefficients e[k, a] = Tr[sigma_a K_k] / 2^q over all 4^q labels."""
    paulis = _product_paulis(q)
    return np.einsum("aij,kji->ka", paulis, np.stack(kraus)) / 2.0**q


def block_chi(kraus, q: int) -> np.ndarray:
    """Full 4^q x 4^q process matrix of one Kraus block."""
    e = block_coefficients(kraus, q)
    return e.T @ e.conj()


def _block_label_restriction(index: LowDegreeIndex, support) -> np.ndarray:
    """Base-4 label of every index string restricted to a block support."""
    labels = index.label_matrix()  # (D, n)
    out = np.zeros(index.D, dtype=np.int64)
    for q in support:
        out = 4 * out + labels[:, q]
    return out


def chi_from_kraus(
    channel: ChannelModel | CoefficientChannel, d: int
) -> ProcessMatrix:
    """Assemble the degree-d process matrix of a channel.

    For Kraus blocks, each block is Pauli-expanded and chi over the
    weight-<=d string set is the product of block factors; the weight lost
    to higher-degree strings is reported as ``residual`` (the exact l2
    truncation error, from the per-block weight generating functions).
    """
    if isinstance(channel, CoefficientChannel):
        return _chi_from_coefficients(channel, d)
    index = low_degree_index(channel.n, d)
    chis = [(sup, block_chi(kraus, len(sup))) for sup, kraus in channel.blocks]
    entries = np.ones((index.D, index.D), dtype=complex)
    for sup, chi_b in chis:
        restr = _block_label_restriction(index, sup)
        entries *= chi_b[np.ix_(restr, restr)]
    total, kept = _pair_weight_split(chis, d)
    residual = math.sqrt(max(total - kept, 0.0))
    return ProcessMatrix(index, entries, residual)


def _chi_from_coefficients(channel: CoefficientChannel, d: int) -> ProcessMatrix:
    index = low_degree_index(channel.n, d)
    keep = [j for j, p in enumerate(channel.strings) if p.weight <= d]
    coeffs = channel.coeffs
    chi_own = coeffs.T @ coeffs.conj()
    total = float(np.sum(np.abs(chi_own) ** 2))
    kept_rows = chi_own[np.ix_(keep, keep)]
    kept = float(np.sum(np.abs(kept_rows) ** 2))
    entries = np.zeros((index.D, index.D), dtype=complex)
    pos = [index.index_of(channel.strings[j]) for j in keep]
    entries[np.ix_(pos, pos)] = kept_rows
    return ProcessMatrix(index, entries, math.sqrt(max(total - kept, 0.0)))


# ---------------------------------------------------------------------------
# truncation accounting
# ---------------------------------------------------------------------------

def _block_weight_tables(chis):
    """Per-block tables S[wa, wb] = sum over label pairs of |chi_b|^2.

    ``wa``/``wb`` count non-identity sites of the row/column label within
    the block; convolving these over blocks gives the exact joint weight
    distribution of |chi|^2 for the product channel.
    """
    tables = []
    diag_tables = []
    for sup, chi_b in chis:
        q = len(sup)
        lab_w = np.array(
            [sum(1 for i in range(q) if (a >> (2 * (q - 1 - i))) & 3) for a in range(4**q)]
        )
        S = np.zeros((q + 1, q + 1))
        for wa in range(q + 1):
            for wb in range(q + 1):
                rows = lab_w == wa
                cols = lab_w == wb
                S[wa, wb] = np.sum(np.abs(chi_b[np.ix_(rows, cols)]) ** 2)
        Sd = np.array(
            [chi_b.diagonal().real[lab_w == w].sum() for w in range(q + 1)]
        )
        tables.append(S)
        diag_tables.append(Sd)
    return tables, diag_tables


def _pair_weight_split(chis, d):
    """(total, kept) sums of |chi_AB|^2 with kept = both weights <= d."""
    tables, _ = _block_weight_tables(chis)
    joint = np.ones((1, 1))
    for S in tables:
        q = S.shape[0] - 1
        new = np.zeros((joint.shape[0] + q, joint.shape[1] + q))
        for wa in range(q + 1):
            for wb in range(q + 1):
                new[wa : wa + joint.shape[0], wb : wb + joint.shape[1]] += (
                    S[wa, wb] * joint
                )
        joint = new
    total = float(joint.sum())
    kept = float(joint[: d + 1, : d + 1].sum())
    return total, kept


@dataclass
class TruncationReport:
    chi: ProcessMatrix
    l2_error: float
    diagonal_bound: float


def truncate_chi(channel: ChannelModel | CoefficientChannel, d: int) -> TruncationReport:
    """Degree-d truncation with its exact l2 error and the PSD diagonal bound.

    ``l2_error**2`` sums |chi_AB|^2 over pairs where either string exceeds
    weight d (exact, via per-block weight generating functions).  The
    diagonal bound uses |chi_AB|^2 <= chi_AA chi_BB:
    ``T^2 - (T - O)^2`` with T the full diagonal sum and O its weight->d
    overflow.
    """
    chi = chi_from_kraus(channel, d)
    if isinstance(channel, CoefficientChannel):
        diag = (np.abs(channel.coeffs) ** 2).sum(axis=0).real
        T = float(diag.sum())
        inside = float(
            sum(w for w, p in zip(diag, channel.strings) if p.weight <= d)
        )
    else:
        chis = [(sup, block_chi(kraus, len(sup))) for sup, kraus in channel.blocks]
        _, diag_tables = _block_weight_tables(chis)
        joint = np.ones(1)
        for Sd in diag_tables:
            joint = np.convolve(joint, Sd)
        T = float(joint.sum())
        inside = float(joint[: d + 1].sum())
    O = max(T - inside, 0.0)
    diag_bound = T**2 - (T - O) ** 2
    return TruncationReport(chi, chi.residual, diag_bound)


# ---------------------------------------------------------------------------
# the example channels
# ---------------------------------------------------------------------------

def correlated_xflip_channel(n: int, eps: float, form: str = "auto"):
    """Correlated coherent X-flip channel with ring-decaying couplings.

    Kraus operators ``E_k = p (1 + i eps sum_m M_km X_m)`` with
    ``M = exp(-(2/n) A)`` for the antisymmetric nearest-neighbour ring
    matrix A.  Completeness fixes ``p = (n (1 + eps^2))**-0.5`` (the
    square root; see package docs) and is re-enforced numerically.

    Returns a dense Kraus model for n <= 4, the coefficient form otherwise
    (``form`` = "kraus"/"coeff" overrides).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] = 1.0
        A[(i + 1) % n, i] = -1.0
    M = expm(-(2.0 / n) * A)
    p = 1.0 / math.sqrt(n * (1 + eps**2))
    if form == "auto":
        form = "kraus" if n <= 4 else "coeff"
    if form == "kraus":
        paulis = _product_paulis(1)
        ops = []
        for k in range(n):
            op = np.eye(2**n, dtype=complex)
            for m in range(n):
                xm = np.array([[1.0 + 0j]])
                for q in range(n):
                    xm = np.kron(xm, SIGMA[X] if q == m else np.eye(2))
                op = op + 1j * eps * M[k, m] * xm
            ops.append(p * op)
        S = sum(K.conj().T @ K for K in ops)
        ev, V = np.linalg.eigh(S)
        S_inv_sqrt = (V / np.sqrt(ev)) @ V.conj().T
        ops = [K @ S_inv_sqrt for K in ops]
        return kraus_list(n, ops, declared_degree=1)
    strings = [PauliString(n)] + [PauliString(n, ((m, X),)) for m in range(n)]
    coeffs = np.zeros((n, n + 1), dtype=complex)
    coeffs[:, 0] = p
    coeffs[:, 1:] = 1j * eps * p * M
    trace = float(np.sum(np.abs(coeffs) ** 2))
    coeffs /= math.sqrt(trace)
    return CoefficientChannel(n, strings, coeffs, declared_degree=1)


def decaying_dephasing_channel(
    n: int, p0: float, gamma0: float, center: int | None = None
) -> ChannelModel:
    """Per-qubit dephasing-after-rotation noise decaying away from the center.

    Site Kraus pair ``{sqrt(p_l) Z R, sqrt(1-p_l) R}`` with
    ``R = exp(-i gamma_l X)``, ``p_l = p0 exp(-l)``, ``gamma_l = gamma0
    exp(-l)``, and l the distance to the chain center (default
    ``(n-1)//2``).
    """
    if not 0 <= p0 <= 1:
        raise ValueError("p0 must be in [0, 1]")
    if center is None:
        center = (n - 1) // 2
    sites = []
    for i in range(n):
        l = abs(i - center)
        p = p0 * math.exp(-l)
        gam = gamma0 * math.exp(-l)
        R = math.cos(gam) * np.eye(2) - 1j * math.sin(gam) * SIGMA[X]
        sites.append([math.sqrt(p) * SIGMA[3] @ R, math.sqrt(1 - p) * R])
    return ChannelModel(n, [((i,), k) for i, k in enumerate(sites)], 1)


def bitflip_product(n: int, p: float) -> ChannelModel:
    """Independent bit flips, probability p per qubit."""
    if not 0 <= p <= 1:
        raise ValueError("p must be in [0, 1]")
    site = [math.sqrt(1 - p) * np.eye(2, dtype=complex), math.sqrt(p) * SIGMA[X]]
    return ChannelModel(n, [((i,), list(site)) for i in range(n)], 1)


# ---------------------------------------------------------------------------
# analytic truncation bounds
# ---------------------------------------------------------------------------

def bitflip_tail_bound(
    n: int, p: float, d: int, epsilon: float | None = None
) -> tuple[float, float | None]:
    """Hoeffding bound on the bit-flip truncation tail, and the p threshold.

    ``bound = exp[-2 ((d+1)/n - p^2) n]`` dominates the exact tail
    ``sum_{k>d} C(n,k) [(1-p)^(n-k) p^k]^2`` whenever ``p^2 < (d+1)/n``.
    If ``epsilon`` is given, also returns the largest p for which the bound
    stays below epsilon, ``sqrt((d+1)/n - log(1/eps)/(2n))`` (the direct
    inversion of the bound).
    """
    if p**2 >= (d + 1) / n:
        raise ValueError("bound inapplicable: requires p^2 < (d+1)/n")
    bound = math.exp(-2.0 * ((d + 1) / n - p**2) * n)
    p_threshold = None
    if epsilon is not None:
        arg = (d + 1) / n - math.log(1.0 / epsilon) / (2.0 * n)
        p_threshold = math.sqrt(max(arg, 0.0))
    return bound, p_threshold


def spurious_coupling_bound(
    n: int,
    d: int,
    alpha: float,
    h: float,
    t: float,
    m: float | None = None,
    epsilon: float | None = None,
) -> tuple[float, float | None]:
    """Truncation bound for weak spurious Hamiltonian couplings.

    With ``m`` interaction terms (default the all-to-all count ``(2n)^2``)
    and ``x = 2 alpha h t m``, the degree-d truncation error is bounded by
    ``2 x^(2 ceil(d/4))`` provided x < 1/2.  If ``epsilon`` is given, also
    returns the alpha threshold ``(eps/2)^(1/(2 ceil(d/4))) / (2 h t m)``.
    """
    if d < 1:
        raise ValueError("need d >= 1")
    if m is None:
        m = (2 * n) ** 2
    x = 2.0 * alpha * h * t * m
    if x >= 0.5:
        raise ValueError("bound inapplicable: requires 2 alpha h t m < 1/2")
    k = math.ceil(d / 4)
    bound = 2.0 * x ** (2 * k)
    alpha_threshold = None
    if epsilon is not None:
        alpha_threshold = (epsilon / 2.0) ** (1.0 / (2 * k)) / (2.0 * h * t * m)
    return bound, alpha_threshold


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def chi_to_csv(chi: ProcessMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={CHI_CSV_SCHEMA} n={chi.index.n} d={chi.index.d}\n")
        writer = csv.writer(fh)
        writer.writerow(["alpha", "beta", "re", "im"])
        for i, a in enumerate(chi.index.strings):
            for j, b in enumerate(chi.index.strings):
                z = complex(chi.entries[i, j])
                writer.writerow([str(a), str(b), repr(z.real), repr(z.imag)])


def chi_from_csv(path) -> ProcessMatrix:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError("missing chi CSV header comment")
        meta = dict(kv.split("=") for kv in header[1:].split())
        index = low_degree_index(int(meta["n"]), int(meta["d"]))
        reader = csv.reader(fh)
        next(reader)  # column header
        entries = np.zeros((index.D, index.D), dtype=complex)
        for alpha, beta, re, im in reader:
            i = index.index_of(PauliString.parse(alpha, index.n))
            j = index.index_of(PauliString.parse(beta, index.n))
            entries[i, j] = float(re) + 1j * float(im)
    return ProcessMatrix(index, entries)
