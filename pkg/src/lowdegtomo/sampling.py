"""Simulation of the randomized Pauli prepare/measure experiment.

Each round prepares a uniformly random product of Pauli eigenstates, applies
the noisy layer (ideal gates, then noise), and measures every qubit in a
uniformly random Pauli basis.  Small systems get the exact joint law; the
factorized sampler draws snapshots block by block in O(n) work per shot,
which reproduces the joint law exactly because the channel, the layer, and
the prepare/measure randomness all factor over the same blocks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channels import ChannelModel, GateLayer, compose_with_layer
from .pauli import STATE_VECTORS, StateString


def worker_rng(seed: int, worker: int = 0) -> np.random.Generator:
    """Counter-based per-worker stream: Philox keyed by (seed, worker).

    Streams for distinct workers are statistically independent, and a rerun
    with the same (seed, worker) reproduces the same draws regardless of
    how many workers run concurrently.
    """
    key = np.array([seed, worker], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Snapshot:
    """One prepared-state / measured-state pair."""

    s: StateString
    r: StateString


@dataclass
class ExactDistribution:
    """Joint law p(r, s) over all (6^n)^2 prepare/measure pairs, n <= 3."""

    n: int
    table: np.ndarray  # [r, s]

    def prob(self, r, s) -> float:
        return float(self.table[_joint_index(r, self.n), _joint_index(s, self.n)])

    def input_marginal(self) -> np.ndarray:
        return self.table.sum(axis=0)


def _joint_index(state, n: int) -> int:
    if isinstance(state, StateString):
        idxs = state.indices
    else:
        idxs = state
    out = 0
    for i in idxs:
        out = 6 * out + int(i)
    return out


def _embed(op: np.ndarray, support, n: int) -> np.ndarray:
    """Embed a 1- or 2-qubit operator into the full n-qubit space."""
    q = len(support)
    full = np.kron(op, np.eye(2 ** (n - q), dtype=complex))
    order = list(support) + [i for i in range(n) if i not in support]
    perm = np.argsort(order)
    tens = full.reshape((2,) * (2 * n))
    tens = tens.transpose(tuple(perm) + tuple(n + p for p in perm))
    return tens.reshape(2**n, 2**n)


def dense_kraus(channel: ChannelModel, layer: GateLayer | None = None):
    """Dense Kraus operators of the noisy layer (noise after ideal gates)."""
    n = channel.n
    merged = compose_with_layer(channel, layer) if layer else channel
    ops = [np.eye(2**n, dtype=complex)]
    for support, kraus in merged.blocks:
        ops = [_embed(K, support, n) @ O for O in ops for K in kraus]
    return ops


def exact_distribution(
    channel: ChannelModel, layer: GateLayer | None = None
) -> ExactDistribution:
    """p(r, s) = <r| C(|s><s|) |r> / 18^n by dense matrix arithmetic."""
    n = channel.n
    if n > 3:
        raise ValueError("exact_distribution is dense; use the factorized sampler")
    ops = dense_kraus(channel, layer)
    vecs = [np.array([1.0 + 0j])]
    for _ in range(n):
        vecs = [np.kron(v, STATE_VECTORS[i]) for v in vecs for i in range(6)]
    vecs = np.stack(vecs)  # (6^n, 2^n)
    table = np.zeros((6**n, 6**n))
    for s in range(6**n):
        proj = np.outer(vecs[s], vecs[s].conj())
        rho = sum(K @ proj @ K.conj().T for K in ops)
        table[:, s] = np.real(np.einsum("ri,ij,rj->r", vecs.conj(), rho, vecs))
    return ExactDistribution(n, table / 18.0**n)


class SnapshotSampler:
    """Factorized exact sampler for block-product noisy layers.

    Per block, the conditional law of the measured eigenstates given the
    prepared ones is tabulated once from dense <= 2-qubit arithmetic;
    drawing a snapshot is then three table lookups per block.  Sampling a
    prepared state uniformly and the outcome by the Born rule in a uniform
    basis reproduces the joint randomized-measurement law exactly for
    trace-preserving channels.
    """

    def __init__(self, channel: ChannelModel, layer: GateLayer | None = None):
        merged = compose_with_layer(channel, layer) if layer else channel
        if not merged.trace_preserving:
            raise ValueError(
                "stochastic sampling needs a trace-preserving channel; "
                "use exact_distribution / analytic variances instead"
            )
        self.n = merged.n
        self.blocks = []
        covered = set()
        for support, kraus in merged.blocks:
            covered.update(support)
            self.blocks.append((tuple(support), _block_outcome_table(kraus)))
        for q in range(self.n):
            if q not in covered:
                ident = [np.eye(2, dtype=complex)]
                self.blocks.append(((q,), _block_outcome_table(ident)))

    def draw(self, rng: np.random.Generator, shots: int):
        """Draw ``shots`` snapshots; returns (S, R) index arrays (shots, n)."""
        S = np.empty((shots, self.n), dtype=np.int64)
        R = np.empty((shots, self.n), dtype=np.int64)
        for support, table in self.blocks:
            q = len(support)
            t_in = rng.integers(0, 6**q, size=shots)
            basis = rng.integers(0, 3**q, size=shots)
            u = rng.random(shots)
            probs = table[t_in, basis]  # (shots, 2^q)
            outcome = (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
            outcome = np.minimum(outcome, 2**q - 1)
            for pos, qubit in enumerate(support):
                shift = q - 1 - pos
                S[:, qubit] = (t_in // 6**shift) % 6
                b_i = (basis // 3**shift) % 3
                e_i = (outcome >> shift) & 1
                R[:, qubit] = 2 * b_i + e_i
        return S, R

    def draw_snapshot(self, rng: np.random.Generator) -> Snapshot:
        S, R = self.draw(rng, 1)
        return Snapshot(StateString(tuple(S[0])), StateString(tuple(R[0])))


def _block_outcome_table(kraus) -> np.ndarray:
    """table[t_in, basis, outcome] = <b,e| E(|t><t|) |b,e> for one block."""
    q = kraus[0].shape[0].bit_length() - 1
    vecs = [np.array([1.0 + 0j])]
    for _ in range(q):
        vecs = [np.kron(v, STATE_VECTORS[i]) for v in vecs for i in range(6)]
    vecs = np.stack(vecs)
    rho = np.stack(
        [
            sum(K @ np.outer(v, v.conj()) @ K.conj().T for K in kraus)
            for v in vecs
        ]
    )
    table = np.zeros((6**q, 3**q, 2**q))
    for basis in range(3**q):
        for outcome in range(2**q):
            m = np.array([1.0 + 0j])
            for pos in range(q):
                shift = q - 1 - pos
                b_i = (basis // 3**shift) % 3
                e_i = (outcome >> shift) & 1
                m = np.kron(m, STATE_VECTORS[2 * b_i + e_i])
            table[:, basis, outcome] = np.real(
                np.einsum("i,tij,j->t", m.conj(), rho, m)
            )
    np.clip(table, 0.0, None, out=table)
    return table


# ---------------------------------------------------------------------------
# snapshot persistence
# ---------------------------------------------------------------------------

def save_snapshots(path, S: np.ndarray, R: np.ndarray) -> None:
    """Write snapshots as CSV rows (shot_index, s, r) with 2-char qubit codes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shot_index", "s", "r"])
        for k in range(S.shape[0]):
            writer.writerow(
                [
                    k,
                    str(StateString(tuple(S[k]))),
                    str(StateString(tuple(R[k]))),
                ]
            )


def load_snapshots(path):
    S_rows, R_rows = [], []
    with open(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        for _, s_text, r_text in reader:
            S_rows.append(StateString.parse(s_text).indices)
            R_rows.append(StateString.parse(r_text).indices)
    return np.array(S_rows, dtype=np.int64), np.array(R_rows, dtype=np.int64)
