"""Day-ahead distribution market clearing with real and reactive nodal price decomposition."""

from .assets import BessUnit, DemandBid, GeneratorOffer, VreUnit
from .dlmp import DlmpReport, SensitivityBundle, decompose, flow_and_loss_sensitivities, voltage_sensitivities
from .errors import (
    CaseValidationError,
    DlmpError,
    EnumerationTooLarge,
    InputError,
    PowerFlowDivergence,
    SolverError,
    SolverTimeout,
    TopologyError,
)
from .market import Duals, MarketCase, MarketSolution, build_dam, clear, extract_duals
from .network import LineParams, Network, build_topology
from .pep import PepResult, SampleSet, brute_force_pep, pep_schedule, solve_pep
from .powerflow import LossModel, PFState, linearize_losses, linearized_voltages, sweep_power_flow

__version__ = "0.1.0"
