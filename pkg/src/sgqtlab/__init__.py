"""Simulation lab for self-guided and standard quantum state tomography."""

__version__ = "0.1.0"

from .qcore import DensityMatrix, PauliOp, PureState, fidelity, haar_random_state, pauli  # noqa: E402
from .measure import MeasurementBackend, PhotonBudgetConfig, WaveplateErrorModel  # noqa: E402
from .sgqt import GainSchedule, RunRecord, SgqtConfig, run_sgqt  # noqa: E402
from .sqt import TomographySet, mle_estimate, run_sqt  # noqa: E402
from .bench import ExperimentSpec, infidelity_reduction, run_experiment  # noqa: E402

__all__ = [
    "DensityMatrix",
    "PauliOp",
    "PureState",
    "fidelity",
    "haar_random_state",
    "pauli",
    "MeasurementBackend",
    "PhotonBudgetConfig",
    "WaveplateErrorModel",
    "GainSchedule",
    "RunRecord",
    "SgqtConfig",
    "run_sgqt",
    "TomographySet",
    "mle_estimate",
    "run_sqt",
    "ExperimentSpec",
    "infidelity_reduction",
    "run_experiment",
]
