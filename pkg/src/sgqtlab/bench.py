"""Experiment definitions, cell execution and summary statistics.

An experiment is a grid of cells (condition x target x repetition). Each
cell owns an SGQT run plus whatever SQT arms are paired with it, all seeded
from ``SeedSequence(seed, spawn_key=cell)``. Cells emit flat trajectory
rows; every summary number is computed from those rows alone, so the
summary can be rebuilt from the CSV.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .measure import BellSourceModel, MeasurementBackend, PhotonBudgetConfig, WaveplateErrorModel, bell_state
from .qcore import DensityMatrix, PureState, fidelity, haar_random_state
from .sgqt import EXPECTATION, PARTIAL_FIDELITY, GainSchedule, SgqtAborted, SgqtConfig, run_sgqt
from .sqt import MleConvergenceWarning, SqtResult, TomographySet, run_sqt

__all__ = [
    "KINDS",
    "ExperimentSpec",
    "Row",
    "ExperimentResult",
    "SummaryStats",
    "Comparison",
    "UndefinedMetric",
    "MatchedSqt",
    "infidelity_reduction",
    "matched_budget_sqt",
    "default_targets",
    "run_experiment",
    "summarize",
    "photon_efficiency",
    "worker_count",
]

LOW_COUNT_1Q = "low-count-1q"
ERROR_SWEEP_1Q = "error-sweep-1q"
SUBSET_SWEEP_2Q = "two-qubit-subset-sweep"
LOW_COUNT_2Q = "two-qubit-low-count"
ERROR_SWEEP_2Q = "two-qubit-error-sweep"
KINDS = (LOW_COUNT_1Q, ERROR_SWEEP_1Q, SUBSET_SWEEP_2Q, LOW_COUNT_2Q, ERROR_SWEEP_2Q)

DEFAULT_TARGET_SEED = 2015
MIN_PHOTONS_PER_PROJECTOR = 7.0
WORKERS_ENV = "SGQTLAB_WORKERS"

# Gains: the textbook set does not survive shot noise at a few photons per
# projector, so noisy runs default to tuned schedules (see README).
DEFAULT_GAINS = GainSchedule()
ROBUST_GAINS_1Q = GainSchedule(a=0.8, b=0.35, A=0.0, s=1.0, t=0.101)
GAINS_2Q = GainSchedule(a=0.5, b=0.1, A=0.0, s=0.602, t=0.101)
LOW_COUNT_GAINS_2Q = GainSchedule(a=0.2, b=0.35, A=0.0, s=0.602, t=0.101)

_DEFAULTS = {
    # kind: (iterations, photons per expectation, gains, checkpoints, ladder)
    LOW_COUNT_1Q: (40, 3.5, ROBUST_GAINS_1Q, (4, 10, 20, 40), (280.0, 3900.0, 2.0e5)),
    ERROR_SWEEP_1Q: (40, 2500.0, ROBUST_GAINS_1Q, (), ()),
    SUBSET_SWEEP_2Q: (100, 1000.0, GAINS_2Q, (), ()),
    LOW_COUNT_2Q: (100, 0.875, LOW_COUNT_GAINS_2Q, (10, 25, 50, 100), ()),
    ERROR_SWEEP_2Q: (100, 1000.0, GAINS_2Q, (), ()),
}


class UndefinedMetric(ValueError):
    pass


def infidelity_reduction(f_sgqt: float, f_sqt: float) -> float:
    """(F_sgqt - F_sqt) / (1 - F_sqt); positive when SGQT is closer."""
    if f_sqt >= 1.0:
        raise UndefinedMetric(f"infidelity reduction is undefined for F_sqt = {f_sqt}")
    return (f_sgqt - f_sqt) / (1.0 - f_sqt)


def default_targets(n_qubits: int, n_targets: int = 3, seed: int = DEFAULT_TARGET_SEED) -> Tuple[PureState, ...]:
    if n_qubits == 2:
        return (bell_state(BellSourceModel()),)
    rng = np.random.default_rng(seed)
    return tuple(haar_random_state(2, rng) for _ in range(n_targets))


def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, min(int(env), os.cpu_count() or 1))
    return 1


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment. ``None`` fields take per-kind defaults on construction."""

    kind: str
    name: str = ""
    targets: Optional[Tuple[PureState, ...]] = None
    n_targets: int = 3
    target_seed: int = DEFAULT_TARGET_SEED
    repetitions: int = 10
    iterations: Optional[int] = None
    photons_per_expectation: Optional[float] = None
    gains: Optional[GainSchedule] = None
    subset_sizes: Optional[Tuple[int, ...]] = None
    error_levels: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    error_redraw: str = "per-measurement"
    checkpoints: Optional[Tuple[int, ...]] = None
    sqt_budgets: Optional[Tuple[float, ...]] = None
    sqt_repetitions: Optional[int] = None
    benchmark: str = "truth"
    benchmark_photons: float = 2.0e5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.benchmark not in ("truth", "simulated-sqt"):
            raise ValueError(f"unknown benchmark mode {self.benchmark!r}")
        iters, lam, gains, checkpoints, ladder = _DEFAULTS[self.kind]
        fill = {
            "name": self.name or self.kind,
            "iterations": self.iterations if self.iterations is not None else iters,
            "photons_per_expectation": float(
                self.photons_per_expectation if self.photons_per_expectation is not None else lam
            ),
            "gains": self.gains if self.gains is not None else gains,
            "checkpoints": tuple(self.checkpoints if self.checkpoints is not None else checkpoints),
            "sqt_budgets": tuple(float(b) for b in (self.sqt_budgets if self.sqt_budgets is not None else ladder)),
            "error_levels": tuple(float(x) for x in self.error_levels),
        }
        if self.subset_sizes is None:
            fill["subset_sizes"] = (2, 4, 6, 8) if self.kind == SUBSET_SWEEP_2Q else (8,)
        else:
            fill["subset_sizes"] = tuple(int(m) for m in self.subset_sizes)
        if self.targets is not None:
            fill["targets"] = tuple(t if isinstance(t, PureState) else PureState(t) for t in self.targets)
        for key, value in fill.items():
            object.__setattr__(self, key, value)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if any(not 0 < c <= self.iterations for c in self.checkpoints):
            raise ValueError("checkpoints must lie in [1, iterations]")
        if self.n_qubits == 2 and any(not 1 <= m <= 16 for m in self.subset_sizes):
            raise ValueError("subset sizes must be in [1, 16]")
        WaveplateErrorModel(0.0, self.error_redraw, self.error_levels)
        if self.targets is not None and any(t.dim != 2**self.n_qubits for t in self.targets):
            raise ValueError(f"{self.kind} needs {self.n_qubits}-qubit targets")

    @property
    def n_qubits(self) -> int:
        return 1 if self.kind in (LOW_COUNT_1Q, ERROR_SWEEP_1Q) else 2

    @property
    def is_error_sweep(self) -> bool:
        return self.kind in (ERROR_SWEEP_1Q, ERROR_SWEEP_2Q)

    def target_states(self) -> Tuple[PureState, ...]:
        if self.targets is not None:
            return self.targets
        return default_targets(self.n_qubits, self.n_targets, self.target_seed)

    def conditions(self) -> List[Tuple[str, Optional[float], int]]:
        """(suffix, sigma, subset size) per condition."""
        size = self.subset_sizes[0]
        if self.is_error_sweep:
            return [(f"sigma={_fmt(s)}", s, size) for s in self.error_levels]
        if self.kind == SUBSET_SWEEP_2Q:
            return [(f"M={m}", None, m) for m in self.subset_sizes]
        return [("", None, size)]

    def matched_sqt_repetitions(self, subset_size: int) -> int:
        """SQT repetitions giving at least as many settings as SGQT used."""
        if self.sqt_repetitions is not None:
            return self.sqt_repetitions
        if self.n_qubits == 1:
            return 10
        return math.ceil(self.iterations * subset_size / 16)

    def comparisons(self) -> List[Tuple[str, str]]:
        pairs = []
        for suffix, _, _ in self.conditions():
            if self.is_error_sweep:
                pairs.append((_label("sgqt", suffix), _label("sqt", suffix)))
        if self.checkpoints and self.kind in (LOW_COUNT_1Q, LOW_COUNT_2Q):
            pairs.append(("sgqt", "sqt-matched"))
        for budget in self.sqt_budgets:
            pairs.append(("sgqt", f"sqt-budget={_fmt(budget)}"))
        return pairs

    def cell_count(self) -> int:
        return len(self.conditions()) * len(self.target_states()) * self.repetitions


def _fmt(x: float) -> str:
    return f"{x:g}"


def _label(arm: str, suffix: str) -> str:
    return f"{arm}|{suffix}" if suffix else arm


# ---------------------------------------------------------------------------
# Rows


@dataclass(frozen=True)
class Row:
    experiment: str
    condition: str
    trial: int
    iteration: Optional[int]
    photons_cumulative: float
    fidelity: float
    alpha: float = math.nan
    beta: float = math.nan
    g: float = math.nan

    COLUMNS = ("experiment", "condition", "trial", "iteration", "photons_cumulative", "fidelity", "alpha", "beta", "g")

    def as_strings(self) -> List[str]:
        return [
            self.experiment,
            self.condition,
            str(self.trial),
            "" if self.iteration is None else str(self.iteration),
            _num(self.photons_cumulative),
            _num(self.fidelity),
            _num(self.alpha),
            _num(self.beta),
            _num(self.g),
        ]

    @classmethod
    def from_strings(cls, values: Sequence[str]) -> "Row":
        exp, cond, trial, it, photons, fid, alpha, beta, g = values
        return cls(
            exp,
            cond,
            int(trial),
            None if it == "" else int(it),
            _parse(photons),
            _parse(fid),
            _parse(alpha),
            _parse(beta),
            _parse(g),
        )


def _num(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if float(x).is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))


def _parse(s: str) -> float:
    return math.nan if s == "" else float(s)


# ---------------------------------------------------------------------------
# SQT arms


@dataclass(frozen=True)
class MatchedSqt:
    iteration: int
    budget: float
    photons_per_projector: float
    result: Optional[SqtResult]

    @property
    def skipped(self) -> bool:
        return self.result is None


def matched_budget_sqt(
    photons: Sequence[float],
    checkpoints: Iterable[int],
    target,
    *,
    tset: Optional[TomographySet] = None,
    seeds: Optional[Sequence[int]] = None,
    error_model: Optional[WaveplateErrorModel] = None,
    benchmark=None,
) -> List[MatchedSqt]:
    """SQT at the cumulative photon counts an SGQT run reached at ``checkpoints``.

    The budget is split evenly over the tomography set as the Poisson mean
    per projector. Budgets under 7 photons per projector are skipped.
    """
    rho = target.density() if isinstance(target, PureState) else target
    rho = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)
    tset = tset if tset is not None else TomographySet.for_qubits(rho.n_qubits)
    checkpoints = list(checkpoints)
    seeds = list(seeds) if seeds is not None else list(range(len(checkpoints)))
    out = []
    for k, seed in zip(checkpoints, seeds):
        budget = float(photons[k])
        lam = budget / len(tset)
        if lam < MIN_PHOTONS_PER_PROJECTOR:
            out.append(MatchedSqt(k, budget, lam, None))
            continue
        backend = MeasurementBackend(rho, PhotonBudgetConfig(lam), error_model, rng_seed=int(seed))
        out.append(MatchedSqt(k, budget, lam, _quiet_sqt(backend, tset, benchmark)))
    return out


def _quiet_sqt(backend, tset, benchmark) -> SqtResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MleConvergenceWarning)
        return run_sqt(backend, tset, benchmark)


# ---------------------------------------------------------------------------
# Cells


@dataclass(frozen=True)
class _Cell:
    index: Tuple[int, int, int]  # condition, target, repetition
    suffix: str
    sigma: Optional[float]
    subset_size: int
    target: PureState


def _seeds(spec: ExperimentSpec, index, n: int) -> List[int]:
    ss = np.random.SeedSequence(spec.seed, spawn_key=tuple(index))
    return [int(x) for x in ss.generate_state(n)]


def _benchmark(spec: ExperimentSpec, target_index: int, target: PureState):
    if spec.benchmark == "truth":
        return None
    tset = TomographySet.for_qubits(target.n_qubits)
    seed = _seeds(spec, (10**6, target_index), 1)[0]
    backend = MeasurementBackend(target.density(), PhotonBudgetConfig(spec.benchmark_photons / len(tset)), rng_seed=seed)
    return _quiet_sqt(backend, tset, None).estimate


def _run_cell(spec: ExperimentSpec, cell: _Cell) -> Tuple[List[Row], bool]:
    ci, ti, rep = cell.index
    trial = ti * spec.repetitions + rep
    seeds = _seeds(spec, cell.index, 8)
    error_model = None
    if cell.sigma is not None:
        error_model = WaveplateErrorModel(cell.sigma, spec.error_redraw, spec.error_levels)
    lam = spec.photons_per_expectation
    rho = cell.target.density()
    bench = _benchmark(spec, ti, cell.target)
    objective = EXPECTATION if spec.n_qubits == 1 else PARTIAL_FIDELITY
    config = SgqtConfig(spec.iterations, spec.gains, objective=objective, subset_size=cell.subset_size, seed=seeds[0])
    backend = MeasurementBackend(rho, PhotonBudgetConfig(lam), error_model, rng_seed=seeds[1])
    try:
        record = run_sgqt(config, backend, benchmark=bench)
    except SgqtAborted:
        return [], False

    sgqt_cond = _label("sgqt", cell.suffix)
    rows = [
        Row(spec.name, sgqt_cond, trial, r.k, r.photons_cumulative, r.fidelity, r.alpha, r.beta, r.g)
        for r in record.iterations
    ]
    tset = TomographySet.for_qubits(spec.n_qubits)
    ideal = math.isinf(lam)

    if spec.is_error_sweep:
        reps = spec.matched_sqt_repetitions(cell.subset_size)
        arm_rng = np.random.SeedSequence(seeds[2])
        fids, photons = [], 0.0
        for child in arm_rng.spawn(reps):
            b = MeasurementBackend(rho, PhotonBudgetConfig(lam), error_model, rng_seed=int(child.generate_state(1)[0]))
            res = _quiet_sqt(b, tset, bench)
            fids.append(res.fidelity)
            photons += res.photons_used
        rows.append(Row(spec.name, _label("sqt", cell.suffix), trial, spec.iterations, photons, float(np.mean(fids))))

    if spec.checkpoints and spec.kind in (LOW_COUNT_1Q, LOW_COUNT_2Q) and not ideal:
        arm_seeds = _seeds(spec, cell.index + (1,), len(spec.checkpoints))
        for m in matched_budget_sqt(
            record.photons, spec.checkpoints, rho, tset=tset, seeds=arm_seeds, error_model=error_model, benchmark=bench
        ):
            if not m.skipped:
                rows.append(Row(spec.name, "sqt-matched", trial, m.iteration, m.result.photons_used, m.result.fidelity))

    if spec.sqt_budgets:
        arm_seeds = _seeds(spec, cell.index + (2,), len(spec.sqt_budgets))
        for budget, seed in zip(spec.sqt_budgets, arm_seeds):
            b = MeasurementBackend(rho, PhotonBudgetConfig(budget / len(tset)), error_model, rng_seed=seed)
            res = _quiet_sqt(b, tset, bench)
            rows.append(Row(spec.name, f"sqt-budget={_fmt(budget)}", trial, None, res.photons_used, res.fidelity))
    return rows, True


def _cells(spec: ExperimentSpec) -> List[_Cell]:
    targets = spec.target_states()
    return [
        _Cell((ci, ti, rep), suffix, sigma, size, target)
        for ci, (suffix, sigma, size) in enumerate(spec.conditions())
        for ti, target in enumerate(targets)
        for rep in range(spec.repetitions)
    ]


def _run_cell_star(args):
    return _run_cell(*args)


# ---------------------------------------------------------------------------
# Summaries


@dataclass(frozen=True)
class SummaryStats:
    """Fidelity statistics of one condition at one iteration (or budget)."""

    condition: str
    iteration: Optional[int]
    n: int
    photons_mean: float
    mean: float
    std: float
    median: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Comparison:
    sgqt: str
    sqt: str
    iteration: Optional[int]
    n_pairs: int
    photons_sgqt: float
    photons_sqt: float
    median_sgqt: float
    median_sqt: float
    mean_sgqt: float
    mean_sqt: float
    win_fraction: float
    reduction_mean: float
    reduction_median: float
    reduction_positive_fraction: float
    undefined: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _stats(condition, iteration, photons, fids) -> SummaryStats:
    f = np.asarray(fids, dtype=float)
    std = float(np.std(f, ddof=1)) if f.size > 1 else 0.0
    return SummaryStats(condition, iteration, int(f.size), float(np.mean(photons)), float(np.mean(f)), std, float(np.median(f)))


def _compare(sgqt, sqt, iteration, pairs) -> Comparison:
    a = np.array([p[0].fidelity for p in pairs])
    b = np.array([p[1].fidelity for p in pairs])
    red = np.array([infidelity_reduction(x, y) for x, y in zip(a, b) if y < 1.0])
    nan = math.nan
    return Comparison(
        sgqt,
        sqt,
        iteration,
        len(pairs),
        float(np.mean([p[0].photons_cumulative for p in pairs])),
        float(np.mean([p[1].photons_cumulative for p in pairs])),
        float(np.median(a)),
        float(np.median(b)),
        float(np.mean(a)),
        float(np.mean(b)),
        float(np.mean(a > b)),
        float(np.mean(red)) if red.size else nan,
        float(np.median(red)) if red.size else nan,
        float(np.mean(red > 0)) if red.size else nan,
        int(np.sum(b >= 1.0)),
    )


def summarize(rows: Sequence[Row], spec: ExperimentSpec) -> dict:
    """All summary numbers, computed from ``rows`` and the experiment layout only."""
    by_key: Dict[Tuple[str, Optional[int]], List[Row]] = {}
    for r in rows:
        by_key.setdefault((r.condition, r.iteration), []).append(r)

    def order(key):
        cond, it = key
        return (cond, -1 if it is None else it)

    stats = [
        _stats(cond, it, [r.photons_cumulative for r in group], [r.fidelity for r in group])
        for (cond, it), group in sorted(by_key.items(), key=lambda kv: order(kv[0]))
    ]

    final_sgqt: Dict[Tuple[str, int], Row] = {}
    for r in rows:
        if r.condition.startswith("sgqt") and r.iteration == spec.iterations:
            final_sgqt[(r.condition, r.trial)] = r
    index = {(r.condition, r.trial, r.iteration): r for r in rows}

    comparisons = []
    for sgqt_cond, sqt_cond in spec.comparisons():
        arm = [r for r in rows if r.condition == sqt_cond]
        iterations = sorted({r.iteration for r in arm if r.iteration is not None})
        if any(r.iteration is None for r in arm):
            iterations.append(None)
        for it in iterations:
            pairs = []
            for r in arm:
                if r.iteration != it:
                    continue
                mate = final_sgqt.get((sgqt_cond, r.trial)) if it is None else index.get((sgqt_cond, r.trial, it))
                if mate is not None:
                    pairs.append((mate, r))
            if pairs:
                comparisons.append(_compare(sgqt_cond, sqt_cond, it, pairs))

    expected = spec.cell_count() // len(spec.conditions())
    missing = {}
    for suffix, _, _ in spec.conditions():
        cond = _label("sgqt", suffix)
        present = sum(1 for key in final_sgqt if key[0] == cond)
        missing[cond] = expected - present

    headline = [s.as_dict() for s in stats if s.condition.startswith("sgqt") and s.iteration == spec.iterations]
    headline += [s.as_dict() for s in stats if s.condition.startswith("sqt") and (s.iteration in (None, spec.iterations))]
    return {
        "experiment": spec.name,
        "kind": spec.kind,
        "n_qubits": spec.n_qubits,
        "iterations": spec.iterations,
        "repetitions": spec.repetitions,
        "n_targets": len(spec.target_states()),
        "missing_cells": missing,
        "headline": headline,
        "conditions": [s.as_dict() for s in stats],
        "comparisons": [c.as_dict() for c in comparisons],
    }


def photon_efficiency(target_fidelity: float, ladder: Dict[float, float]) -> Optional[float]:
    """Smallest SQT budget whose median fidelity reaches ``target_fidelity``."""
    for budget in sorted(ladder):
        if ladder[budget] >= target_fidelity:
            return budget
    return None


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: List[Row] = field(default_factory=list)
    missing: int = 0

    @property
    def summary(self) -> dict:
        return summarize(self.rows, self.spec)

    def condition_rows(self, condition: str) -> List[Row]:
        return [r for r in self.rows if r.condition == condition]

    def final_fidelities(self, condition: str = "sgqt") -> np.ndarray:
        return np.array([r.fidelity for r in self.rows if r.condition == condition and r.iteration == self.spec.iterations])


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> ExperimentResult:
    """Run every cell of ``spec``; output order never depends on ``workers``."""
    cells = _cells(spec)
    n = worker_count(workers)
    if n > 1 and len(cells) > 1:
        with ProcessPoolExecutor(n) as pool:
            outcomes = list(pool.map(_run_cell_star, [(spec, c) for c in cells], chunksize=max(1, len(cells) // (4 * n))))
    else:
        outcomes = [_run_cell(spec, c) for c in cells]
    result = ExperimentResult(spec)
    for rows, ok in outcomes:
        result.rows.extend(rows)
        result.missing += 0 if ok else 1
    return result


def with_overrides(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    return replace(spec, **changes)
