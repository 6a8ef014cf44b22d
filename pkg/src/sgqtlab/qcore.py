"""Exact linear algebra for one- and two-qubit states.

States are stored as dense complex arrays. ``PureState`` and ``DensityMatrix``
validate their invariants on construction and hold read-only arrays, so they
can be shared freely between threads and processes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "PureState",
    "DensityMatrix",
    "PauliOp",
    "BlochVector",
    "PAULI_MATRICES",
    "PAULI_NAMES",
    "ket",
    "pauli",
    "two_qubit_paulis",
    "expectation",
    "pauli_expectation",
    "fidelity",
    "bloch_from_state",
    "state_from_bloch",
    "tensor",
    "pauli_table",
    "density_from_pauli_table",
    "haar_random_state",
    "random_density_matrix",
    "PSI_MINUS",
    "PSI_PLUS",
]

ROUNDOFF = 1e-9

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULI_MATRICES = (SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z)
PAULI_NAMES = "IXYZ"

for _m in PAULI_MATRICES:
    _m.setflags(write=False)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


class PureState:
    """Normalized state vector of dimension ``2**n``.

    The constructor normalizes its input. Equality ignores global phase.
    """

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes: Union[Sequence[complex], np.ndarray, "PureState"]):
        if isinstance(amplitudes, PureState):
            amplitudes = amplitudes.amplitudes
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if not _is_power_of_two(v.size):
            raise ValueError(f"state dimension must be a power of two >= 2, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("state amplitudes must be finite")
        norm = np.linalg.norm(v)
        if norm < 1e-14:
            raise ValueError("cannot normalize a zero vector")
        object.__setattr__(self, "amplitudes", _frozen(v / norm))

    def __setattr__(self, name, value):
        raise AttributeError("PureState is immutable")

    def __reduce__(self):
        return (PureState, (np.array(self.amplitudes),))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), check=False)

    def overlap(self, other: "PureState") -> float:
        """|<self|other>|**2."""
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)

    def __eq__(self, other):
        if not isinstance(other, PureState):
            return NotImplemented
        return self.dim == other.dim and self.overlap(other) > 1 - 1e-10

    __hash__ = None

    def __repr__(self):
        amps = np.array2string(self.amplitudes, precision=4, separator=", ")
        return f"PureState({amps})"


class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix."""

    __slots__ = ("elements",)

    def __init__(self, elements, *, check: bool = True):
        if isinstance(elements, DensityMatrix):
            elements = elements.elements
        m = np.asarray(elements, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or not _is_power_of_two(m.shape[0]):
            raise ValueError(f"density matrix must be square with power-of-two size, got {m.shape}")
        if check:
            if not np.allclose(m, m.conj().T, atol=1e-10, rtol=0):
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(m)
            if abs(tr - 1) > 1e-10:
                raise ValueError(f"density matrix trace is {tr.real:.3g}, expected 1")
            lo = np.linalg.eigvalsh(m).min()
            if lo < -1e-10:
                raise ValueError(f"density matrix has negative eigenvalue {lo:.3g}")
        object.__setattr__(self, "elements", _frozen(m))

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    def __reduce__(self):
        return (DensityMatrix, (np.array(self.elements),))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.elements)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


StateLike = Union[PureState, DensityMatrix]


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.elements
    if isinstance(x, PureState):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    m = np.asarray(x, dtype=complex)
    if m.ndim == 1:
        return np.outer(m, m.conj())
    return m


def _as_vector(x) -> np.ndarray:
    if isinstance(x, PureState):
        return x.amplitudes
    return np.asarray(x, dtype=complex).reshape(-1)


def _clamp(value: float, lo: float, hi: float, what: str) -> float:
    if value < lo - ROUNDOFF or value > hi + ROUNDOFF:
        raise ValueError(f"{what} {value!r} outside [{lo}, {hi}] beyond roundoff")
    return min(max(value, lo), hi)


@dataclass(frozen=True)
class PauliOp:
    """Tensor product of single-qubit Paulis, labelled by factor indices.

    ``label`` holds one index in 0..3 (I, X, Y, Z) per qubit; ``(1, 1)`` is
    X⊗X. ``index`` is the base-4 integer of the label, so the 16 two-qubit
    operators are numbered 0 (II) to 15 (ZZ).
    """

    label: tuple

    def __post_init__(self):
        if not self.label or any(i not in (0, 1, 2, 3) for i in self.label):
            raise ValueError(f"invalid Pauli label {self.label!r}")

    @property
    def index(self) -> int:
        out = 0
        for i in self.label:
            out = 4 * out + i
        return out

    @property
    def name(self) -> str:
        return "".join(PAULI_NAMES[i] for i in self.label)

    @property
    def n_qubits(self) -> int:
        return len(self.label)

    @property
    def is_identity(self) -> bool:
        return all(i == 0 for i in self.label)

    @property
    def matrix(self) -> np.ndarray:
        return _PAULI_CACHE[self.label]

    def __str__(self):
        return self.name


def pauli(spec, n_qubits: int = None) -> PauliOp:
    """Build a PauliOp from a name ("XZ"), a label tuple, or an integer index."""
    if isinstance(spec, PauliOp):
        return spec
    if isinstance(spec, str):
        return PauliOp(tuple(PAULI_NAMES.index(c) for c in spec.upper()))
    if isinstance(spec, (int, np.integer)):
        n = 2 if n_qubits is None else n_qubits
        if not 0 <= spec < 4**n:
            raise ValueError(f"Pauli index {spec} out of range for {n} qubits")
        digits = []
        for _ in range(n):
            digits.append(int(spec) % 4)
            spec = int(spec) // 4
        return PauliOp(tuple(reversed(digits)))
    return PauliOp(tuple(int(i) for i in spec))


_PAULI_CACHE = {}
for _n in (1, 2):
    for _lab in itertools.product(range(4), repeat=_n):
        _m = PAULI_MATRICES[_lab[0]]
        for _i in _lab[1:]:
            _m = np.kron(_m, PAULI_MATRICES[_i])
        _PAULI_CACHE[_lab] = _frozen(_m)


def two_qubit_paulis() -> list:
    return [pauli(i, 2) for i in range(16)]


# stacked 2-qubit Paulis, indexed by PauliOp.index
PAULI_STACK_2Q = np.stack([_PAULI_CACHE[p.label] for p in two_qubit_paulis()])
PAULI_STACK_1Q = np.stack(PAULI_MATRICES)


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.x**2 + self.y**2 + self.z**2 > 1 + 1e-10:
            raise ValueError("Bloch vector longer than 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def length(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))


def ket(bits: str) -> PureState:
    """Computational-basis state, e.g. ``ket("01")``. H is 0 and V is 1."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1
    return PureState(v)


PSI_MINUS = PureState(np.array([0, 1, -1, 0]) / np.sqrt(2))
PSI_PLUS = PureState(np.array([0, 1, 1, 0]) / np.sqrt(2))


def expectation(rho, psi) -> float:
    """Probability <psi|rho|psi> of projecting ``rho`` onto ``psi``."""
    m = _as_matrix(rho)
    v = _as_vector(psi)
    if m.shape[0] != v.size:
        raise ValueError(f"dimension mismatch: state {v.size}, operator {m.shape[0]}")
    value = np.vdot(v, m @ v).real
    return _clamp(float(value), 0.0, 1.0, "probability")


def pauli_expectation(rho, op) -> float:
    """Tr(rho P) for a Pauli operator."""
    op = pauli(op) if not isinstance(op, PauliOp) else op
    m = _as_matrix(rho)
    if m.shape[0] != 2**op.n_qubits:
        raise ValueError(f"dimension mismatch: operator on {op.n_qubits} qubits, state dim {m.shape[0]}")
    value = np.trace(m @ op.matrix)
    if abs(value.imag) > 1e-10:
        raise ValueError(f"Pauli expectation has imaginary part {value.imag:.3g}")
    return _clamp(float(value.real), -1.0, 1.0, "Pauli expectation")


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    if w.min() < -1e-10:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w.min():.3g})")
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(a, b) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))**2.

    Reduces to <phi|b|phi> when ``a`` is the pure state phi. Accepts
    PureState, DensityMatrix or raw arrays.
    """
    if isinstance(a, PureState) or isinstance(b, PureState):
        if isinstance(b, PureState):
            a, b = b, a
        return expectation(_check_psd(b), a)
    ma, mb = _check_psd(a), _check_psd(b)
    if ma.shape != mb.shape:
        raise ValueError("dimension mismatch")
    # nuclear norm of sqrt(a) sqrt(b); avoids sqrt of roundoff eigenvalues
    sv = np.linalg.svd(_psd_sqrt(ma) @ _psd_sqrt(mb), compute_uv=False)
    value = float(np.sum(sv) ** 2)
    return _clamp(value, 0.0, 1.0, "fidelity")


def _check_psd(x) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.elements
    return DensityMatrix(_as_matrix(x)).elements


def bloch_from_state(psi) -> BlochVector:
    m = _as_matrix(psi)
    if m.shape != (2, 2):
        raise ValueError("Bloch vectors are defined for single qubits only")
    r = [float(np.trace(m @ s).real) for s in PAULI_MATRICES[1:]]
    return BlochVector(*r)


def state_from_bloch(v) -> PureState:
    x, y, z = v.as_array() if isinstance(v, BlochVector) else np.asarray(v, dtype=float)
    if abs(np.sqrt(x * x + y * y + z * z) - 1) > 1e-9:
        raise ValueError("only unit Bloch vectors correspond to pure states")
    theta = np.arccos(np.clip(z, -1, 1))
    phi = np.arctan2(y, x)
    return PureState([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def tensor(*factors):
    """Kronecker product of states or operators.

    Pure states give a PureState, density matrices a DensityMatrix, raw
    arrays an array.
    """
    if not factors:
        raise ValueError("tensor needs at least one factor")
    if all(isinstance(f, PureState) for f in factors):
        out = factors[0].amplitudes
        for f in factors[1:]:
            out = np.kron(out, f.amplitudes)
        return PureState(out)
    if all(isinstance(f, DensityMatrix) for f in factors):
        out = factors[0].elements
        for f in factors[1:]:
            out = np.kron(out, f.elements)
        return DensityMatrix(out, check=False)
    mats = [f.matrix if isinstance(f, PauliOp) else np.asarray(getattr(f, "elements", f)) for f in factors]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def pauli_table(psi) -> np.ndarray:
    """4x4 table with entry (i, j) = <psi|P_i ⊗ P_j|psi> / 4."""
    m = _as_matrix(psi)
    if m.shape != (4, 4):
        raise ValueError("pauli_table needs a two-qubit state")
    vals = np.einsum("pij,ji->p", PAULI_STACK_2Q, m).real
    return vals.reshape(4, 4) / 4


def density_from_pauli_table(table: np.ndarray) -> np.ndarray:
    """Invert pauli_table: rho = sum_ij T_ij P_i ⊗ P_j."""
    t = np.asarray(table, dtype=float).reshape(16)
    return np.einsum("p,pij->ij", t, PAULI_STACK_2Q)


def haar_random_state(dim: int, rng: np.random.Generator) -> PureState:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return PureState(v)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int = None) -> DensityMatrix:
    """Random mixed state from the induced (Ginibre) measure."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    m = (m + m.conj().T) / 2
    return DensityMatrix(m / np.trace(m).real)
