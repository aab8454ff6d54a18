from .errors import ConfigError, NumericalError, RefocusError
from .medium import CouplingMatrices, MediumStats, assemble_coupling, make_kernel
from .pekerisrefocus import ExperimentRunner
from .spectrum import ModeSet, WaveguideConfig, solve_dispersion
__version__ = '0.1.0'
