"""Simulated polarization measurements.

A ``MeasurementBackend`` plays the role of the optical bench: it holds the
true state, turns requested projectors into waveplate settings, optionally
jitters those settings, and returns photon-count frequencies. Poisson
photon numbers with binomial (or multinomial) detection are used throughout.

Polarization convention: |H> is |0>, |V> is |1>. Angles are in degrees,
measured from horizontal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .qcore import DensityMatrix, PauliOp, PureState, pauli

logger = logging.getLogger(__name__)

__all__ = [
    "PhotonBudgetConfig",
    "WaveplateErrorModel",
    "JonesMatrix",
    "jones_matrix",
    "analysis_unitary",
    "projector_to_waveplate_angles",
    "waveplate_projector",
    "BellSourceModel",
    "bell_state",
    "MeasurementBackend",
    "DEFAULT_ERROR_LEVELS",
]

DEFAULT_ERROR_LEVELS = (1.0, 2.0, 4.0, 8.0)

PER_EXPECTATION = "per-expectation"
PER_ITERATION_SPLIT = "per-iteration-split"


@dataclass(frozen=True)
class PhotonBudgetConfig:
    """Poisson mean of the photon number behind each sampled frequency.

    ``math.inf`` selects the ideal (noiseless) mode, where exact
    probabilities are returned and no photons are consumed.
    """

    mean_photons_per_expectation: float = 3.5
    accounting_mode: str = PER_ITERATION_SPLIT

    def __post_init__(self):
        if not self.mean_photons_per_expectation >= 0:
            raise ValueError("mean photon number must be >= 0")
        if self.accounting_mode not in (PER_EXPECTATION, PER_ITERATION_SPLIT):
            raise ValueError(f"unknown accounting mode {self.accounting_mode!r}")

    @classmethod
    def ideal(cls) -> "PhotonBudgetConfig":
        return cls(math.inf)

    @classmethod
    def from_iteration_budget(cls, photons_per_iteration: float, mode: str = PER_ITERATION_SPLIT):
        """Budget stated per SGQT iteration (two projector measurements)."""
        lam = photons_per_iteration / 2 if mode == PER_ITERATION_SPLIT else photons_per_iteration
        return cls(lam, mode)

    @property
    def is_ideal(self) -> bool:
        return math.isinf(self.mean_photons_per_expectation)


@dataclass(frozen=True)
class WaveplateErrorModel:
    """Zero-mean Gaussian jitter on analysis waveplate angles.

    ``redraw="per-measurement"`` draws fresh errors for every measurement
    setting; ``"per-run"`` draws one fixed offset per waveplate when the
    backend is built.
    """

    sigma_degrees: float = 0.0
    redraw: str = "per-measurement"
    levels: Tuple[float, ...] = DEFAULT_ERROR_LEVELS

    def __post_init__(self):
        if self.sigma_degrees < 0:
            raise ValueError("sigma_degrees must be >= 0")
        if self.redraw not in ("per-measurement", "per-run"):
            raise ValueError(f"unknown redraw mode {self.redraw!r}")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])) or any(x < 0 for x in self.levels):
            raise ValueError("error levels must be non-negative and strictly increasing")

    @property
    def active(self) -> bool:
        return self.sigma_degrees > 0


# ---------------------------------------------------------------------------
# Jones calculus


@dataclass(frozen=True)
class JonesMatrix:
    matrix: np.ndarray
    plate_kind: str
    angle_degrees: float

    __array_ufunc__ = None  # let ndarray @ JonesMatrix reach __rmatmul__

    def __matmul__(self, other):
        other = other.matrix if isinstance(other, JonesMatrix) else other
        return self.matrix @ other

    def __rmatmul__(self, other):
        return np.asarray(other) @ self.matrix

    def apply(self, state) -> np.ndarray:
        v = state.amplitudes if isinstance(state, PureState) else np.asarray(state, dtype=complex)
        return self.matrix @ v


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def jones_matrix(kind: str, theta_degrees: float) -> JonesMatrix:
    """Retarder with fast axis at ``theta_degrees``.

    The fast-axis polarization picks up phase 1 and the slow axis -1 (HWP)
    or i (QWP).
    """
    kind = kind.upper()
    if kind == "HWP":
        retard = np.diag([1, -1]).astype(complex)
    elif kind == "QWP":
        retard = np.diag([1, 1j])
    else:
        raise ValueError(f"unknown waveplate kind {kind!r}")
    th = np.deg2rad(theta_degrees)
    r = _rotation(th)
    return JonesMatrix(r @ retard @ r.T, kind, float(theta_degrees))


def analysis_unitary(qwp_degrees: float, hwp_degrees: float) -> np.ndarray:
    """Light passes the QWP first, then the HWP, then a PBS."""
    return jones_matrix("HWP", hwp_degrees) @ jones_matrix("QWP", qwp_degrees)


def waveplate_projector(qwp_degrees: float, hwp_degrees: float, port: int = 0) -> PureState:
    """State detected in the transmitted (H, port 0) or reflected (V, port 1) PBS output."""
    u = analysis_unitary(qwp_degrees, hwp_degrees)
    return PureState(u.conj().T[:, port])


def projector_to_waveplate_angles(psi) -> Tuple[float, float]:
    """QWP and HWP angles (degrees) whose transmitted port projects onto ``psi``.

    The QWP is aligned with the polarization ellipse's major axis, which
    leaves linear light at ``orientation - ellipticity``; the HWP then
    rotates that onto H.
    """
    v = psi.amplitudes if isinstance(psi, PureState) else PureState(psi).amplitudes
    if v.size != 2:
        raise ValueError("waveplate angles are defined for single-qubit projectors")
    a, b = v
    s1 = abs(a) ** 2 - abs(b) ** 2
    cross = np.conj(a) * b
    s2, s3 = 2 * cross.real, 2 * cross.imag
    orientation = 0.5 * np.arctan2(s2, s1)
    ellipticity = 0.5 * np.arctan2(s3, np.hypot(s1, s2))
    qwp = np.rad2deg(orientation)
    hwp = np.rad2deg(orientation - ellipticity) / 2
    return float(qwp) + 0.0, float(hwp) + 0.0


# ---------------------------------------------------------------------------
# Entangled source


@dataclass(frozen=True)
class BellSourceModel:
    theta_degrees: float = 45.0
    epsilon_degrees: float = 0.0

    @property
    def phase_degrees(self) -> float:
        return 4 * (self.theta_degrees + self.epsilon_degrees)


def bell_state(source: BellSourceModel = BellSourceModel()) -> PureState:
    """(|H1 V2> + e^{i phi} |V1 H2>) / sqrt(2) with phi = 4 (theta + epsilon)."""
    phi = np.deg2rad(source.phase_degrees)
    return PureState(np.array([0, 1, np.exp(1j * phi), 0]) / np.sqrt(2))


# ---------------------------------------------------------------------------
# Backend

# +1 eigenvector of each single-qubit Pauli; I is analysed in the H/V basis
_PAULI_ANALYSIS_STATES = (
    PureState([1, 0]),
    PureState([1, 1]),
    PureState([1, 1j]),
    PureState([1, 0]),
)


def _factorize(psi: PureState) -> Tuple[PureState, ...]:
    if psi.dim == 2:
        return (psi,)
    if psi.dim != 4:
        raise ValueError("only one- and two-qubit projectors are supported")
    u, s, vh = np.linalg.svd(psi.amplitudes.reshape(2, 2))
    if s[1] > 1e-9:
        raise ValueError("entangled projectors cannot be set with local waveplates")
    return PureState(u[:, 0]), PureState(vh[0, :])


@dataclass
class MeasurementBackend:
    """Seeded photon-counting simulator for a fixed true state.

    Not thread-safe: the RNG and photon counter are mutated by every call.
    Build one backend per trial.
    """

    true_state: DensityMatrix
    photon_config: PhotonBudgetConfig = field(default_factory=PhotonBudgetConfig)
    error_model: Optional[WaveplateErrorModel] = None
    rng_seed: int = 0
    photons_consumed: int = field(default=0, init=False)
    no_photon_events: int = field(default=0, init=False)
    measurements: int = field(default=0, init=False)

    def __post_init__(self):
        if isinstance(self.true_state, PureState):
            self.true_state = self.true_state.density()
        elif not isinstance(self.true_state, DensityMatrix):
            self.true_state = DensityMatrix(self.true_state)
        self._rho = self.true_state.elements
        self._rng = np.random.default_rng(self.rng_seed)
        self._fixed_offsets = None
        if self.error_model is not None and self.error_model.active and self.error_model.redraw == "per-run":
            self._fixed_offsets = self._rng.normal(0.0, self.error_model.sigma_degrees, size=(self.n_qubits, 2))

    @property
    def dim(self) -> int:
        return self.true_state.dim

    @property
    def n_qubits(self) -> int:
        return self.true_state.n_qubits

    @property
    def lam(self) -> float:
        return self.photon_config.mean_photons_per_expectation

    @property
    def is_ideal(self) -> bool:
        return self.photon_config.is_ideal

    # -- waveplate errors -------------------------------------------------

    def _errors_active(self) -> bool:
        return self.error_model is not None and self.error_model.active

    def _jitter(self, qubit: int) -> np.ndarray:
        if self._fixed_offsets is not None:
            return self._fixed_offsets[qubit]
        return self._rng.normal(0.0, self.error_model.sigma_degrees, size=2)

    def _local_basis(self, target: PureState, qubit: int) -> Tuple[np.ndarray, np.ndarray]:
        """(transmitted, reflected) analysis states actually realized on the bench."""
        if not self._errors_active():
            t = target.amplitudes
            return t, np.array([-np.conj(t[1]), np.conj(t[0])])
        q, h = projector_to_waveplate_angles(target)
        dq, dh = self._jitter(qubit)
        u = analysis_unitary(q + dq, h + dh).conj().T
        return u[:, 0], u[:, 1]

    def realized_projector(self, psi) -> np.ndarray:
        """Projector vector after waveplate errors (draws errors when active)."""
        psi = psi if isinstance(psi, PureState) else PureState(psi)
        if psi.dim != self.dim:
            raise ValueError(f"projector dimension {psi.dim} does not match state dimension {self.dim}")
        if not self._errors_active():
            return psi.amplitudes
        factors = _factorize(psi)
        vecs = [self._local_basis(f, i)[0] for i, f in enumerate(factors)]
        out = vecs[0]
        for v in vecs[1:]:
            out = np.kron(out, v)
        return out

    # -- sampling ---------------------------------------------------------

    def _draw_photons(self) -> int:
        n = int(self._rng.poisson(self.lam))
        self.photons_consumed += n
        self.measurements += 1
        if n == 0:
            self.no_photon_events += 1
            logger.debug("no photons detected for measurement %d", self.measurements)
        return n

    def probability(self, psi) -> float:
        """Detection probability for the realized projector (no sampling)."""
        v = self.realized_projector(psi)
        p = float(np.vdot(v, self._rho @ v).real)
        return min(max(p, 0.0), 1.0)

    def measure_counts(self, psi) -> Tuple[float, float]:
        """(successes, photons) for one projector measurement.

        In ideal mode the exact probability is returned with unit weight.
        """
        p = self.probability(psi)
        if self.is_ideal:
            self.measurements += 1
            return p, 1.0
        n_total = self._draw_photons()
        if n_total == 0:
            return 0, 0
        return int(self._rng.binomial(n_total, p)), n_total

    def measure_expectation(self, psi) -> float:
        """Sampled frequency n / N; 0.5 when no photon arrives."""
        n, total = self.measure_counts(psi)
        if total == 0:
            return 0.5
        return n / total

    def measure_pauli(self, op) -> float:
        """Empirical eigenvalue average of a Pauli measured with local analysers."""
        op = pauli(op, self.n_qubits) if not isinstance(op, PauliOp) else op
        if op.n_qubits != self.n_qubits:
            raise ValueError(f"Pauli on {op.n_qubits} qubits for a {self.n_qubits}-qubit state")
        if op.is_identity:
            return 1.0
        bases, signs = [], []
        for qubit, factor in enumerate(op.label):
            bases.append(self._local_basis(_PAULI_ANALYSIS_STATES[factor], qubit))
            signs.append(np.array([1.0, 1.0]) if factor == 0 else np.array([1.0, -1.0]))
        vecs, eig = [bases[0][0], bases[0][1]], signs[0]
        for basis, sign in zip(bases[1:], signs[1:]):
            vecs = [np.kron(a, b) for a in vecs for b in basis]
            eig = np.kron(eig, sign)
        vecs = np.array(vecs)
        probs = np.einsum("ki,ij,kj->k", vecs.conj(), self._rho, vecs).real
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        if self.is_ideal:
            self.measurements += 1
            return float(np.clip(eig @ probs, -1.0, 1.0))
        n_total = self._draw_photons()
        if n_total == 0:
            return 0.0
        counts = self._rng.multinomial(n_total, probs)
        return float(eig @ counts / n_total)
