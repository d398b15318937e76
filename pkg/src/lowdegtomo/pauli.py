"""Single-qubit Pauli algebra, eigenstate labels, and low-degree string sets.

Conventions fixed here and used everywhere else in the package:

* Pauli labels are integers ``0..3`` for ``I, X, Y, Z`` (0 is the identity).
* The six single-qubit Pauli eigenstates are indexed ``2*basis + eigenbit``
  with bases ordered ``x, y, z`` (0, 1, 2), so the order is
  ``x+, x-, y+, y-, z0, z1``.  The fixed global phases are
  ``|x±> = (|0> ± |1>)/sqrt(2)``, ``|y±> = (|0> ± i|1>)/sqrt(2)``,
  ``|z0> = |0>``, ``|z1> = |1>``; a state is the eigenvector of its basis
  Pauli with eigenvalue ``(-1)**eigenbit``.
* Low-degree string sets are ordered weight-major, then by qubit positions,
  then by labels with ``X < Y < Z`` on each chosen qubit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

I, X, Y, Z = 0, 1, 2, 3
LABEL_CHARS = "IXYZ"
BASIS_CHARS = "xyz"

SIGMA = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_S2 = 1.0 / math.sqrt(2.0)
#: Row k is the state vector of eigenstate index k (see module docstring).
STATE_VECTORS = np.array(
    [
        [_S2, _S2],
        [_S2, -_S2],
        [_S2, 1j * _S2],
        [_S2, -1j * _S2],
        [1.0, 0.0],
        [0.0, 1.0],
    ],
    dtype=complex,
)

#: Rank-1 projectors |s><s| for the six eigenstates.
STATE_PROJECTORS = np.einsum(
    "si,sj->sij", STATE_VECTORS, STATE_VECTORS.conj()
)

# Multiplication table: sigma_a sigma_b = phase * sigma_c.
_MUL_LABEL = np.zeros((4, 4), dtype=np.int64)
_MUL_PHASE = np.zeros((4, 4), dtype=complex)
for _a in range(4):
    for _b in range(4):
        _prod = SIGMA[_a] @ SIGMA[_b]
        for _c in range(4):
            _tr = np.trace(SIGMA[_c].conj().T @ _prod) / 2.0
            if abs(_tr) > 0.5:
                _MUL_LABEL[_a, _b] = _c
                _MUL_PHASE[_a, _b] = complex(round(_tr.real), round(_tr.imag))
                break


def pauli_mul(a: int, b: int) -> tuple[complex, int]:
    """Multiply single-qubit Paulis: sigma_a sigma_b = phase * sigma_c.

    Returns (phase, c) with phase in {1, -1, 1j, -1j}.
    """
    return _MUL_PHASE[a, b], int(_MUL_LABEL[a, b])


def labels_commute(a: int, b: int) -> bool:
    """True iff sigma_a and sigma_b commute."""
    return a == 0 or b == 0 or a == b


def levi_civita(i: int, j: int, k: int) -> int:
    """Levi-Civita symbol for indices in {1,2,3} (X,Y,Z axes)."""
    if {i, j, k} != {1, 2, 3}:
        return 0
    return 1 if (j - i) % 3 == 1 else -1


@dataclass(frozen=True)
class StateLabel:
    """One of the six Pauli eigenstates, as (basis, eigenbit).

    basis is 'x', 'y' or 'z'; eigenbit 0/1 selects the eigenvalue
    ``(-1)**eigenbit`` of the basis Pauli.
    """

    basis: str
    eigenbit: int

    def __post_init__(self):
        if self.basis not in BASIS_CHARS or self.eigenbit not in (0, 1):
            raise ValueError(f"invalid state label ({self.basis}, {self.eigenbit})")

    @property
    def index(self) -> int:
        return 2 * BASIS_CHARS.index(self.basis) + self.eigenbit

    @classmethod
    def from_index(cls, idx: int) -> "StateLabel":
        return cls(BASIS_CHARS[idx // 2], idx % 2)

    @property
    def vector(self) -> np.ndarray:
        return STATE_VECTORS[self.index]

    def __str__(self) -> str:
        return f"{self.basis}{self.eigenbit}"


def state_index(basis: int | str, eigenbit: int) -> int:
    """Index of the eigenstate with the given basis (0..2 or 'xyz') and bit."""
    if isinstance(basis, str):
        basis = BASIS_CHARS.index(basis)
    return 2 * basis + eigenbit


def overlap(r: StateLabel | int, s: StateLabel | int) -> complex:
    """Inner product <r|s> of two eigenstates under the fixed phase convention."""
    ri = r.index if isinstance(r, StateLabel) else r
    si = s.index if isinstance(s, StateLabel) else s
    return complex(STATE_VECTORS[ri].conj() @ STATE_VECTORS[si])


@dataclass(frozen=True)
class StateString:
    """A product state of single-qubit Pauli eigenstates."""

    indices: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.indices)

    @classmethod
    def from_labels(cls, labels: "list[StateLabel]") -> "StateString":
        return cls(tuple(l.index for l in labels))

    def __str__(self) -> str:
        return "".join(str(StateLabel.from_index(i)) for i in self.indices)

    @classmethod
    def parse(cls, text: str) -> "StateString":
        if len(text) % 2:
            raise ValueError(f"state string {text!r} has odd length")
        pairs = [text[i : i + 2] for i in range(0, len(text), 2)]
        return cls.from_labels([StateLabel(p[0], int(p[1])) for p in pairs])


@dataclass(frozen=True)
class PauliString:
    """A Pauli string on n qubits, stored sparsely.

    ``support`` holds (qubit, label) pairs with non-identity labels only,
    sorted by qubit index.  Two strings are equal iff their supports (and
    qubit counts) match.
    """

    n: int
    support: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        sup = tuple(sorted(self.support))
        qubits = [q for q, _ in sup]
        if len(set(qubits)) != len(qubits):
            raise ValueError("repeated qubit in support")
        for q, lab in sup:
            if not 0 <= q < self.n:
                raise ValueError(f"qubit {q} out of range for n={self.n}")
            if lab not in (X, Y, Z):
                raise ValueError(f"support must not contain the identity (got {lab})")
        object.__setattr__(self, "support", sup)

    @property
    def weight(self) -> int:
        return len(self.support)

    def label_at(self, qubit: int) -> int:
        for q, lab in self.support:
            if q == qubit:
                return lab
        return I

    def labels(self) -> np.ndarray:
        """Dense per-qubit label array of length n."""
        out = np.zeros(self.n, dtype=np.int64)
        for q, lab in self.support:
            out[q] = lab
        return out

    def __str__(self) -> str:
        return " ".join(f"{LABEL_CHARS[lab]}{q}" for q, lab in self.support)

    @classmethod
    def parse(cls, text: str, n: int) -> "PauliString":
        """Parse the text form, e.g. ``"X0 Z3"``; the empty string is identity."""
        support = []
        for token in text.split():
            lab = token[0].upper()
            if lab not in "XYZ":
                raise ValueError(f"bad Pauli token {token!r}")
            support.append((int(token[1:]), LABEL_CHARS.index(lab)))
        return cls(n, tuple(support))

    @classmethod
    def from_labels(cls, labels) -> "PauliString":
        sup = tuple((q, int(lab)) for q, lab in enumerate(labels) if lab != I)
        return cls(len(labels), sup)

    def matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix; only sensible for small n."""
        out = np.array([[1.0 + 0j]])
        labels = self.labels()
        for q in range(self.n):
            out = np.kron(out, SIGMA[labels[q]])
        return out


@dataclass(frozen=True)
class LowDegreeIndex:
    """Ordered enumeration of all Pauli strings of weight <= d on n qubits.

    The order is weight-major, then lexicographic in the qubit positions,
    then lexicographic in the labels with X < Y < Z.  ``D`` equals
    ``sum_i 3^i C(n, i)`` for ``i = 0..d``.
    """

    n: int
    d: int
    strings: tuple[PauliString, ...]
    _lookup: dict = field(repr=False, hash=False, compare=False, default_factory=dict)

    @property
    def D(self) -> int:
        return len(self.strings)

    def index_of(self, p: PauliString) -> int:
        return self._lookup[p.support]

    def __contains__(self, p: PauliString) -> bool:
        return p.support in self._lookup

    def label_matrix(self) -> np.ndarray:
        """(D, n) array of per-qubit labels for all strings."""
        return np.stack([p.labels() for p in self.strings])


def low_degree_cardinality(n: int, d: int) -> int:
    """D = sum_{i=0}^{d} 3^i C(n, i).

    The weight-i count is 3^i C(n, i): choose i qubits, then one of X/Y/Z
    per chosen qubit.
    """
    return sum(3**i * math.comb(n, i) for i in range(d + 1))


def low_degree_index(n: int, d: int) -> LowDegreeIndex:
    """Enumerate the weight-<=d Pauli strings on n qubits in documented order."""
    if not 0 <= d <= n:
        raise ValueError(f"degree d={d} must satisfy 0 <= d <= n={n}")
    strings = []
    for w in range(d + 1):
        for qubits in itertools.combinations(range(n), w):
            for labs in itertools.product((X, Y, Z), repeat=w):
                strings.append(PauliString(n, tuple(zip(qubits, labs))))
    lookup = {p.support: i for i, p in enumerate(strings)}
    assert len(strings) == low_degree_cardinality(n, d)
    return LowDegreeIndex(n, d, tuple(strings), lookup)
