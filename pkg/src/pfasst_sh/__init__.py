"""Parallel-in-time (PFASST) shallow-water solver on the sphere.

Spherical-harmonic spatial discretization, IMEX SDC and MLSDC baselines,
a two-level PFASST block scheduler and a theoretical cost model.
"""

from .analysis import (CostParams, ErrorReport, cost_mlsdc, cost_pfasst, cost_sdc,
                       max_spectrum, spectral_error, speedup_vs_mlsdc, speedup_vs_sdc)
from .cases import CASES, default_params, initial_state
from .multilevel import TransferPair, make_pair, mlsdc_step
from .pfasst import BlockConfig, BlockResult, run_block, run_pfasst
from .sdc import QuadratureTables, SpaceTimeState, build_tables, sdc_step
from .spherical_harmonics import (ConfigurationError, GridField, SpectralField,
                                  TransformPlan, analyse, synthesise)
from .swe_rhs import ModelParams, PrognosticState, SWEProblem

__version__ = "0.1.0"
