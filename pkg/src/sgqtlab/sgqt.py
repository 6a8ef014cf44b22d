"""Self-guided tomography: SPSA ascent over projective measurements.

The iterate is a pure state. Each iteration perturbs its real/imaginary
amplitude vector along a random ±1 direction, measures the objective at
the two perturbed states, forms the finite-difference gain along that
direction and steps. One qubit uses the projector expectation directly.
Two qubits use a fidelity estimate assembled from a random subset of local
Pauli measurements, since the perturbed states are generally entangled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .measure import MeasurementBackend
from .qcore import PAULI_STACK_1Q, PAULI_STACK_2Q, DensityMatrix, PureState, ket

__all__ = [
    "GainSchedule",
    "SgqtConfig",
    "IterationRecord",
    "RunRecord",
    "DegeneratePerturbation",
    "ObjectiveUndefined",
    "SgqtAborted",
    "rademacher",
    "to_params",
    "from_params",
    "perturb",
    "gradient_estimate",
    "step",
    "pauli_expectations",
    "sampling_weights",
    "sample_pauli_subset",
    "measure_subset",
    "partial_fidelity",
    "run_sgqt",
]

EXPECTATION = "expectation"
PARTIAL_FIDELITY = "partial-fidelity"
MAX_RETRIES = 3


class DegeneratePerturbation(ValueError):
    """A perturbed amplitude vector collapsed to zero."""


class ObjectiveUndefined(ValueError):
    """Every Pauli term of the partial fidelity had a vanishing denominator."""


class SgqtAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class GainSchedule:
    """alpha_k = a / (k + 1 + A)**s and beta_k = b / (k + 1)**t."""

    a: float = 3.0
    b: float = 0.1
    A: float = 0.0
    s: float = 0.602
    t: float = 0.101

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("gain constants a and b must be positive")
        if self.A < 0:
            raise ValueError("stability constant A must be >= 0")
        if not 0 < self.t < self.s <= 1:
            raise ValueError(f"exponents must satisfy 0 < t < s <= 1, got s={self.s}, t={self.t}")

    @classmethod
    def asymptotic(cls, a: float = 3.0, b: float = 0.1, A: float = 0.0) -> "GainSchedule":
        return cls(a=a, b=b, A=A, s=1.0, t=1 / 6)

    def alpha(self, k: int) -> float:
        return self.a / (k + 1 + self.A) ** self.s

    def beta(self, k: int) -> float:
        return self.b / (k + 1) ** self.t


def rademacher(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice((-1.0, 1.0), size=n)


def to_params(psi: PureState) -> np.ndarray:
    """Interleaved (Re a0, Im a0, Re a1, Im a1, ...)."""
    v = psi.amplitudes
    x = np.empty(2 * v.size)
    x[0::2], x[1::2] = v.real, v.imag
    return x


def from_params(x: np.ndarray) -> PureState:
    v = x[0::2] + 1j * x[1::2]
    if np.linalg.norm(v) < 1e-14:
        raise DegeneratePerturbation("perturbed amplitudes vanish")
    return PureState(v)


def perturb(phi: PureState, delta: np.ndarray, step_size: float) -> PureState:
    """normalize(phi + step_size * delta) in real-parameter coordinates."""
    if not math.isfinite(step_size):
        raise ValueError(f"step size must be finite, got {step_size}")
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (2 * phi.dim,):
        raise ValueError(f"perturbation must have length {2 * phi.dim}")
    if step_size == 0:
        return phi
    return from_params(to_params(phi) + step_size * delta)


def gradient_estimate(e_plus: float, e_minus: float, beta: float) -> float:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return (e_plus - e_minus) / (2 * beta)


def step(phi: PureState, delta: np.ndarray, g: float, alpha: float) -> PureState:
    return perturb(phi, delta, alpha * g)


# ---------------------------------------------------------------------------
# Partial fidelity from Pauli subsets


def pauli_expectations(phi: PureState) -> np.ndarray:
    """<phi|P_i|phi> for every Pauli, indexed like ``PauliOp.index``."""
    stack = {2: PAULI_STACK_1Q, 4: PAULI_STACK_2Q}.get(phi.dim)
    if stack is None:
        raise ValueError("Pauli tables exist for one and two qubits only")
    v = phi.amplitudes
    return np.einsum("i,pij,j->p", v.conj(), stack, v).real


def sampling_weights(states) -> np.ndarray:
    """Mean of <s|P_i|s>**2 over one state or a sequence of states."""
    if isinstance(states, PureState):
        states = (states,)
    return np.mean([pauli_expectations(s) ** 2 for s in states], axis=0)


def sample_pauli_subset(
    phi,
    size: int,
    rng: np.random.Generator,
    floor: float = 1e-3,
    replace: bool = False,
) -> List[int]:
    """Random Pauli indices drawn with probability proportional to <phi|P|phi>**2.

    ``phi`` may also be a sequence of states, in which case the squared
    expectations are averaged over them. Indices whose (root-mean-square)
    predicted expectation is below ``floor`` are never drawn. Without
    replacement the result has distinct entries and may be shorter than
    ``size`` when few indices are eligible.
    """
    w = sampling_weights(phi)
    n_paulis = w.size
    if not 1 <= size <= n_paulis:
        raise ValueError(f"subset size must be in [1, {n_paulis}], got {size}")
    eligible = np.flatnonzero(w >= floor**2)
    if not replace:
        size = min(size, eligible.size)
    p = w[eligible] / w[eligible].sum()
    picks = rng.choice(eligible, size=size, replace=replace, p=p)
    return [int(i) for i in picks]


def measure_subset(backend: MeasurementBackend, subset: Sequence[int]) -> np.ndarray:
    return np.array([backend.measure_pauli(int(i)) for i in subset])


def partial_fidelity(
    measured,
    phi: PureState,
    subset: Sequence[int],
    *,
    sampled_at=None,
    floor: float = 1e-3,
) -> float:
    """Mean of measured/predicted Pauli ratios over ``subset``.

    ``measured`` is either a backend (the subset is measured now) or the
    already-measured values aligned with ``subset``.

    ``sampled_at`` names the state(s) whose squared Pauli expectations set
    the sampling weights. Each term then becomes
    ``measured * <phi|P|phi> / mean_s <s|P|s>**2``, an importance-weighted
    estimate of <phi|rho|phi> that stays unbiased away from the sampling
    state. When ``sampled_at`` is ``phi`` itself (or omitted) the term is the
    plain ratio ``measured / <phi|P|phi>``.
    """
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        raise ValueError("Pauli subset is empty")
    if isinstance(measured, MeasurementBackend):
        values = measure_subset(measured, subset)
    else:
        values = np.asarray(measured, dtype=float)
        if values.shape != subset.shape:
            raise ValueError("measured values must align with the subset")
    chi = pauli_expectations(phi)[subset]
    if sampled_at is None:
        weight = chi**2
    else:
        weight = sampling_weights(sampled_at)[subset]
    keep = weight >= floor**2
    if not keep.any():
        raise ObjectiveUndefined("all partial-fidelity denominators fell below the floor")
    if sampled_at is None:
        terms = values[keep] / chi[keep]
    else:
        terms = values[keep] * chi[keep] / weight[keep]
    return float(np.mean(terms))


# ---------------------------------------------------------------------------
# Runs


@dataclass(frozen=True)
class SgqtConfig:
    iterations: int = 40
    gains: GainSchedule = field(default_factory=GainSchedule)
    initial_state: Optional[PureState] = None
    objective: str = EXPECTATION
    subset_size: int = 8
    subset_replacement: bool = True
    denom_floor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.objective not in (EXPECTATION, PARTIAL_FIDELITY):
            raise ValueError(f"unknown objective {self.objective!r}")
        if not 1 <= self.subset_size <= 16:
            raise ValueError("subset_size must be in [1, 16]")

    def start(self, dim: int) -> PureState:
        if self.initial_state is None:
            return ket("0" * (dim.bit_length() - 1))
        if self.initial_state.dim != dim:
            raise ValueError("initial state dimension does not match the backend")
        return self.initial_state


@dataclass(frozen=True)
class IterationRecord:
    k: int
    estimate: PureState
    alpha: float
    beta: float
    g: float
    photons_cumulative: int
    fidelity: float
    subset: tuple = ()


@dataclass
class RunRecord:
    """Trajectory of one SGQT run; entry 0 is the starting state."""

    iterations: List[IterationRecord] = field(default_factory=list)
    no_photon_events: int = 0
    retries: int = 0

    @property
    def final_estimate(self) -> PureState:
        return self.iterations[-1].estimate

    @property
    def final_fidelity(self) -> float:
        return self.iterations[-1].fidelity

    @property
    def fidelities(self) -> np.ndarray:
        return np.array([r.fidelity for r in self.iterations])

    @property
    def photons(self) -> np.ndarray:
        return np.array([r.photons_cumulative for r in self.iterations])

    def __len__(self):
        return len(self.iterations)


def _benchmark_fidelity(benchmark: np.ndarray, phi: PureState) -> float:
    v = phi.amplitudes
    return float(min(max(np.vdot(v, benchmark @ v).real, 0.0), 1.0))


def run_sgqt(
    config: SgqtConfig,
    backend: MeasurementBackend,
    benchmark: Optional[DensityMatrix] = None,
) -> RunRecord:
    """Run SGQT for ``config.iterations`` steps against ``backend``.

    Fidelity to ``benchmark`` (default: the backend's true state) is
    recorded after every step. Two-qubit runs draw one Pauli subset per
    iteration at the current estimate; it is measured once and shared by
    the + and - evaluations.
    """
    dim = backend.dim
    phi = config.start(dim)
    bench = (benchmark if benchmark is not None else backend.true_state)
    bench = bench.elements if isinstance(bench, DensityMatrix) else np.asarray(bench)
    if bench.shape != (dim, dim):
        raise ValueError("benchmark dimension does not match the backend")
    rng = np.random.default_rng(config.seed)
    gains = config.gains
    photons0 = backend.photons_consumed
    events0 = backend.no_photon_events
    nan = float("nan")

    record = RunRecord()
    record.iterations.append(IterationRecord(0, phi, nan, nan, nan, 0, _benchmark_fidelity(bench, phi)))

    for k in range(config.iterations):
        alpha, beta = gains.alpha(k), gains.beta(k)
        for attempt in range(MAX_RETRIES + 1):
            delta = rademacher(2 * dim, rng)
            try:
                phi_plus = perturb(phi, delta, beta)
                phi_minus = perturb(phi, delta, -beta)
                break
            except DegeneratePerturbation:
                record.retries += 1
        else:
            raise SgqtAborted(f"iteration {k}: {MAX_RETRIES} retries all gave degenerate perturbations")

        subset = ()
        if config.objective == EXPECTATION:
            e_plus = backend.measure_expectation(phi_plus)
            e_minus = backend.measure_expectation(phi_minus)
        else:
            pair = (phi_plus, phi_minus)
            subset = tuple(
                sample_pauli_subset(pair, config.subset_size, rng, config.denom_floor, config.subset_replacement)
            )
            values = measure_subset(backend, subset)
            e_plus = partial_fidelity(values, phi_plus, subset, sampled_at=pair, floor=config.denom_floor)
            e_minus = partial_fidelity(values, phi_minus, subset, sampled_at=pair, floor=config.denom_floor)

        g = gradient_estimate(e_plus, e_minus, beta)
        try:
            phi = step(phi, delta, g, alpha)
        except DegeneratePerturbation as exc:
            raise SgqtAborted(f"iteration {k}: update collapsed the state") from exc
        record.iterations.append(
            IterationRecord(
                k + 1,
                phi,
                alpha,
                beta,
                g,
                backend.photons_consumed - photons0,
                _benchmark_fidelity(bench, phi),
                subset,
            )
        )
    record.no_photon_events = backend.no_photon_events - events0
    return record
