"""Analog quantum simulation on a 16-level cesium qudit.

Submodules: ``qmath`` (linear-algebra kernels), ``cesium`` (control model),
``models`` (target dynamics), ``optimize`` (waveform search), ``aqs``
(stroboscopic simulation), ``landscape`` (scans), ``io`` and ``cli``.
"""

from .aqs import ErrorModel, SimulationRecord, randomized_sequence_run, run_aqs
from .cesium import CesiumParams, ControlWaveform, controllability_dimension, waveform_propagator
from .models import ModelSpec, lyapunov_estimate, model_propagator
from .optimize import (
    ControlSolution,
    EvoSolution,
    OptimizerOptions,
    multi_seed_search,
    optimize_conventional,
    optimize_evo,
    optimize_state_map,
)

__version__ = "0.1.0"
