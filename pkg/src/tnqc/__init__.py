"""Tensor-train quantum programming: unitary MPO fitting, circuit
compilation, statevector verification and MPS tomography."""

__version__ = "0.1.0"

from .tt import (  # noqa: E402
    DenseGuardError,
    TTMatrix,
    TTVector,
    dot,
    matvec,
    norm,
    to_dense_matrix,
    to_dense_vector,
    tt_round,
    tt_svd_matrix,
    tt_svd_vector,
)
from .fit import FitOptions, FitReport, UnitaryMPO, fit_unitary_mpo  # noqa: E402
from .circuit import QuantumCircuit, circuit_from_unitary_mpo, mps_prep_circuit  # noqa: E402
from .simulator import Statevector, run_postselected  # noqa: E402
from .tomography import fit_mps, sample_records  # noqa: E402

__all__ = [
    "__version__",
    "DenseGuardError",
    "TTMatrix",
    "TTVector",
    "dot",
    "matvec",
    "norm",
    "to_dense_matrix",
    "to_dense_vector",
    "tt_round",
    "tt_svd_matrix",
    "tt_svd_vector",
    "FitOptions",
    "FitReport",
    "UnitaryMPO",
    "fit_unitary_mpo",
    "QuantumCircuit",
    "circuit_from_unitary_mpo",
    "mps_prep_circuit",
    "Statevector",
    "run_postselected",
    "fit_mps",
    "sample_records",
]
