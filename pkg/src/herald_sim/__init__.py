"""Simulation of heralded controlled-phase gates between atoms in coupled cavities."""

from .dynamics import EvolutionResult, IntegratorError, evolve, evolve_effective, herald_and_reduce
from .effective import EffectiveModel, effective_closed_form, effective_numeric, target_decay_rate, tune
from .hilbert import Atom, DensityMatrix, HeraldImpossible, HilbertSpace, Mode, Operator, build_space
from .model import (
    PhysicalParams,
    Variant,
    build_dfs_model,
    build_model,
    build_nonlocal_model,
    caption_params,
    eliminate_E2,
    reduced,
)
from .protocol import (
    GateResult,
    GateVariant,
    Level,
    LogicalCircuit,
    logical_cnot,
    logical_hadamard,
    prepare_params,
    pulse_time,
    run_cphase,
    run_cphase_dfs,
    run_cphase_nonlocal,
    single_qubit_correction,
)

__version__ = "0.1.0"

__all__ = [
    "EvolutionResult", "IntegratorError", "evolve", "evolve_effective", "herald_and_reduce",
    "EffectiveModel", "effective_closed_form", "effective_numeric", "target_decay_rate", "tune",
    "Atom", "DensityMatrix", "HeraldImpossible", "HilbertSpace", "Mode", "Operator", "build_space",
    "PhysicalParams", "Variant", "build_dfs_model", "build_model", "build_nonlocal_model",
    "caption_params", "eliminate_E2", "reduced",
    "GateResult", "GateVariant", "Level", "LogicalCircuit", "logical_cnot", "logical_hadamard",
    "prepare_params", "pulse_time", "run_cphase", "run_cphase_dfs", "run_cphase_nonlocal",
    "single_qubit_correction",
]
