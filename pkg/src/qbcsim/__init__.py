"""Exact small-scale simulation of quantum bit commitment and the attacks that break its binding."""

from .qstate import (
    Basis,
    DensityMatrix,
    RegisterMap,
    StateVector,
    UnitaryOp,
    apply_unitary,
    bb84_state,
    fidelity,
    measure,
    partial_trace,
    tensor,
    trace_distance,
)

__version__ = "0.1.0"
