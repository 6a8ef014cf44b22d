"""Standard tomography baseline.

Fixed polarization-analysis sets ({H, V, D, R} per qubit), linear
inversion, eigenvalue-clipping projection and a binomial maximum-likelihood
fit over a Cholesky factor ``rho = T T^dagger / Tr(T T^dagger)``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .measure import MeasurementBackend
from .qcore import PAULI_STACK_1Q, PAULI_STACK_2Q, DensityMatrix, PureState, fidelity, tensor

__all__ = [
    "TomographySet",
    "CountVector",
    "InvalidTomographySet",
    "MleConvergenceWarning",
    "MleResult",
    "SqtResult",
    "acquire_counts",
    "linear_inversion",
    "project_to_physical",
    "log_likelihood",
    "params_to_density",
    "density_to_params",
    "mle_fit",
    "mle_estimate",
    "run_sqt",
]

H = PureState([1, 0])
V = PureState([0, 1])
D = PureState([1, 1])
R = PureState([1, 1j])


class InvalidTomographySet(ValueError):
    pass


class MleConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class TomographySet:
    projectors: Tuple[PureState, ...]
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.projectors:
            raise InvalidTomographySet("empty tomography set")
        dims = {p.dim for p in self.projectors}
        if len(dims) != 1:
            raise InvalidTomographySet("projectors have mixed dimensions")
        if np.linalg.matrix_rank(self.design_matrix(), tol=1e-10) < self.dim**2:
            raise InvalidTomographySet("projectors are not informationally complete")

    @classmethod
    def one_qubit(cls) -> "TomographySet":
        return cls((H, V, D, R), ("H", "V", "D", "R"))

    @classmethod
    def two_qubit(cls) -> "TomographySet":
        local = dict(zip("HVDR", (H, V, D, R)))
        pairs = list(itertools.product("HVDR", repeat=2))
        return cls(tuple(tensor(local[a], local[b]) for a, b in pairs), tuple(a + b for a, b in pairs))

    @classmethod
    def for_qubits(cls, n_qubits: int) -> "TomographySet":
        if n_qubits == 1:
            return cls.one_qubit()
        if n_qubits == 2:
            return cls.two_qubit()
        raise ValueError("tomography sets are provided for one and two qubits")

    @property
    def dim(self) -> int:
        return self.projectors[0].dim

    def __len__(self):
        return len(self.projectors)

    def vectors(self) -> np.ndarray:
        return np.array([p.amplitudes for p in self.projectors])

    def design_matrix(self) -> np.ndarray:
        """A[i, k] = <pi_i|P_k|pi_i> / d, so that p = A @ (Tr(rho P_k))_k."""
        dim = self.projectors[0].dim
        stack = PAULI_STACK_1Q if dim == 2 else PAULI_STACK_2Q
        v = np.array([p.amplitudes for p in self.projectors])
        return np.einsum("ni,kij,nj->nk", v.conj(), stack, v).real / dim


@dataclass(frozen=True)
class CountVector:
    """Per-projector detections and photon totals.

    Sampled data are integers. Exact probabilities may be passed as
    ``successes = p`` with ``totals = 1``.
    """

    successes: np.ndarray
    totals: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.successes, dtype=float)
        t = np.asarray(self.totals, dtype=float)
        if n.shape != t.shape:
            raise ValueError("successes and totals must align")
        if np.any(n < 0) or np.any(n > t + 1e-12):
            raise ValueError("counts must satisfy 0 <= n <= N")
        object.__setattr__(self, "successes", n)
        object.__setattr__(self, "totals", t)

    @classmethod
    def from_probabilities(cls, probs) -> "CountVector":
        p = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
        return cls(p, np.ones_like(p))

    @property
    def frequencies(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.totals > 0, self.successes / np.where(self.totals > 0, self.totals, 1), np.nan)

    @property
    def total_photons(self) -> float:
        return float(self.totals.sum())

    def __add__(self, other: "CountVector") -> "CountVector":
        return CountVector(self.successes + other.successes, self.totals + other.totals)

    def __len__(self):
        return self.successes.size


def acquire_counts(backend: MeasurementBackend, tset: TomographySet) -> CountVector:
    if backend.dim != tset.dim:
        raise ValueError("tomography set and backend dimensions differ")
    pairs = [backend.measure_counts(p) for p in tset.projectors]
    return CountVector(np.array([n for n, _ in pairs]), np.array([t for _, t in pairs]))


def linear_inversion(counts: CountVector, tset: TomographySet) -> np.ndarray:
    """Least-squares Born-rule inversion; Hermitian, unit trace, maybe not PSD."""
    dim = tset.dim
    a = tset.design_matrix()
    mask = counts.totals > 0
    if np.linalg.matrix_rank(a[mask], tol=1e-10) < dim**2:
        raise InvalidTomographySet("measured projectors do not determine the state")
    r, *_ = np.linalg.lstsq(a[mask], counts.frequencies[mask], rcond=None)
    stack = PAULI_STACK_1Q if dim == 2 else PAULI_STACK_2Q
    m = np.einsum("k,kij->ij", r, stack) / dim
    m = (m + m.conj().T) / 2
    tr = np.trace(m).real
    if tr <= 1e-12:
        raise InvalidTomographySet("inverted matrix has non-positive trace")
    return m / tr


def project_to_physical(m: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero and renormalize."""
    m = (np.asarray(m) + np.asarray(m).conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        return np.eye(m.shape[0]) / m.shape[0]
    return (v * (w / w.sum())) @ v.conj().T


def log_likelihood(counts: CountVector, tset: TomographySet, rho) -> float:
    """Binomial log-likelihood sum_i n_i log p_i + (N_i - n_i) log(1 - p_i)."""
    m = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho)
    vecs = tset.vectors()
    p = np.einsum("ni,ij,nj->n", vecs.conj(), m, vecs).real
    n, fails = counts.successes, counts.totals - counts.successes
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.where(n > 0, n * np.log(np.clip(p, 0, 1)), 0.0)
        lq = np.where(fails > 0, fails * np.log(np.clip(1 - p, 0, 1)), 0.0)
    return float(np.sum(lp + lq))


def _tril(dim):
    return np.tril_indices(dim)


def params_to_density(x: np.ndarray, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Real vector of length dim**2 -> (rho, T).

    Diagonal entries of T are real; strictly lower entries take two reals.
    """
    rows, cols = _tril(dim)
    t = np.zeros((dim, dim), dtype=complex)
    diag = rows == cols
    n_off = int((~diag).sum())
    t[rows[diag], cols[diag]] = x[:dim]
    t[rows[~diag], cols[~diag]] = x[dim : dim + n_off] + 1j * x[dim + n_off :]
    m = t @ t.conj().T
    return m / np.trace(m).real, t


def density_to_params(rho: np.ndarray) -> np.ndarray:
    dim = rho.shape[0]
    t = np.linalg.cholesky(rho)
    rows, cols = _tril(dim)
    diag = rows == cols
    vals = t[rows, cols]
    return np.concatenate([vals[diag].real, vals[~diag].real, vals[~diag].imag])


def _loss_and_grad(x, dim, vecs, n, fails, scale):
    rho, t = params_to_density(x, dim)
    tau = np.trace(t @ t.conj().T).real
    p = np.einsum("ni,ij,nj->n", vecs.conj(), rho, vecs).real
    p = np.clip(p, 1e-300, 1 - 1e-16)
    q = 1 - p
    loss = -(np.sum(n[n > 0] * np.log(p[n > 0])) + np.sum(fails[fails > 0] * np.log(q[fails > 0]))) / scale
    w = (-np.where(n > 0, n / p, 0.0) + np.where(fails > 0, fails / q, 0.0)) / scale
    g_rho = np.einsum("n,ni,nj->ij", w, vecs, vecs.conj())
    k = t.conj().T @ (g_rho - np.trace(g_rho @ rho).real * np.eye(dim))
    kt = (2 / tau) * k.T
    rows, cols = _tril(dim)
    diag = rows == cols
    vals = kt[rows, cols]
    grad = np.concatenate([vals[diag].real, vals[~diag].real, -vals[~diag].imag])
    return loss, grad


@dataclass(frozen=True)
class MleResult:
    estimate: DensityMatrix
    log_likelihood: float
    converged: bool
    iterations: int
    gradient_norm: float


def mle_fit(
    counts: CountVector,
    tset: TomographySet,
    max_iter: int = 10_000,
    gtol: float = 1e-8,
) -> MleResult:
    """Maximize the binomial likelihood over physical density matrices.

    Starts from the projected linear-inversion estimate mixed 0.9/0.1 with
    the maximally mixed state, then runs L-BFGS on the Cholesky factor. The
    projected linear-inversion estimate is kept if it scores higher.
    """
    dim = tset.dim
    if len(counts) != len(tset):
        raise ValueError("counts do not match the tomography set")
    if not np.any(counts.totals > 0):
        raise ValueError("no photons recorded for any projector")
    try:
        projected = project_to_physical(linear_inversion(counts, tset))
    except InvalidTomographySet:
        projected = np.eye(dim) / dim
    start = 0.9 * projected + 0.1 * np.eye(dim) / dim
    vecs = tset.vectors()
    n = counts.successes
    fails = counts.totals - counts.successes
    scale = counts.total_photons
    res = minimize(
        _loss_and_grad,
        density_to_params(start),
        args=(dim, vecs, n, fails, scale),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "maxfun": 2 * max_iter, "gtol": gtol, "ftol": 1e-15},
    )
    rho, _ = params_to_density(res.x, dim)
    rho = (rho + rho.conj().T) / 2
    grad_norm = float(np.linalg.norm(res.jac))
    ll = log_likelihood(counts, tset, rho)
    ll_proj = log_likelihood(counts, tset, projected)
    if ll_proj > ll:
        rho, ll = projected, ll_proj
    # line searches stall at rank-deficient optima with a vanishing gradient
    converged = bool(res.success or grad_norm < 1e-6)
    if not converged:
        warnings.warn(
            f"MLE stopped after {res.nit} iterations with gradient norm {grad_norm:.2e}",
            MleConvergenceWarning,
            stacklevel=2,
        )
    return MleResult(DensityMatrix(rho), ll, converged, int(res.nit), grad_norm)


def mle_estimate(counts: CountVector, tset: TomographySet, **kwargs) -> DensityMatrix:
    return mle_fit(counts, tset, **kwargs).estimate


@dataclass(frozen=True)
class SqtResult:
    estimate: DensityMatrix
    photons_used: int
    fidelity: float
    counts: CountVector


def run_sqt(
    backend: MeasurementBackend,
    tset: Optional[TomographySet] = None,
    benchmark=None,
) -> SqtResult:
    """Acquire counts, fit by MLE and score against ``benchmark``."""
    tset = tset if tset is not None else TomographySet.for_qubits(backend.n_qubits)
    before = backend.photons_consumed
    counts = acquire_counts(backend, tset)
    estimate = mle_estimate(counts, tset)
    bench = benchmark if benchmark is not None else backend.true_state
    return SqtResult(estimate, backend.photons_consumed - before, fidelity(bench, estimate), counts)
