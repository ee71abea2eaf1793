"""Equivalent-circuit surrogate model for multi-stacked frequency selective surfaces."""
from .dataset import Geometry, LabeledSample, SweepRange, SweepSpec, TruthMap, generate_sweep, split, synth_oracle
from .errors import (
    ConfigError,
    CutoffSingularityError,
    DivergedOptimizationError,
    FormatError,
    FssError,
    InvalidInputError,
    PipelineError,
    SingularConversionError,
)
from .fitting import FitConfig, FitReport, fit_single_screen, fit_stack, initial_guess
from .mlp import MlpModel, mlp_backward, mlp_forward
from .netalg import ComplexTwoPort, SMatrix, abcd_shunt, abcd_to_s, abcd_tline, cascade
from .optim import AdamState, adam_step
from .pipeline import EvalSummary, PipelineConfig, transmission_cost, evaluate, predict, train_surrogate
from .pit import (
    FrequencyGrid,
    ScreenParams,
    StackCircuit,
    UnitCellSpec,
    floquet_admittances,
    stack_s21,
    stack_s21_grad,
    y_eq,
)

__version__ = "0.1.0"
