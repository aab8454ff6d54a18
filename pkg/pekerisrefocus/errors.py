class RefocusError(Exception):
    """
    Root of every error raised by the package. Carries the provenance of the failure so that the runner can report
    which module and operation gave up.

    :param message: human readable message
    :param module: name of the module that raised (e.g. 'spectrum')
    :param operation: name of the operation that raised (e.g. 'solve_dispersion')
    """
    module = None
    operation = None

    def __init__(self, message='', module=None, operation=None):
        super(RefocusError, self).__init__(message)
        if module is not None:
            self.module = module
        if operation is not None:
            self.operation = operation

    def provenance(self):
        return {'Module': self.module, 'Operation': self.operation}


class ConfigError(RefocusError, ValueError):
    module = 'pekerisrefocus'
    operation = 'load_configuration'


class NumericalError(RefocusError):
    pass


class NoPropagatingModes(NumericalError, ValueError):
    module = 'spectrum'
    operation = 'solve_dispersion'


class ConvergenceFailure(NumericalError):
    pass


class IndexOutOfRange(NumericalError, IndexError):
    pass


class SpectralParameterOutOfRange(NumericalError, ValueError):
    pass


class StiffnessFailure(NumericalError):
    module = 'power'
    operation = 'integrate_power'


class NotIrreducible(NumericalError):
    module = 'power'
    operation = 'decay_rate'


class PerronViolation(NumericalError):
    module = 'power'
    operation = 'decay_rate'


class BoundsViolation(NumericalError):
    module = 'power'
    operation = 'decay_rate'


class NoRadiativeLoss(NumericalError):
    module = 'power'
    operation = 'decay_rate'


class InvalidGenerator(NumericalError, ValueError):
    module = 'power'
    operation = 'markov_estimate'


class CoefficientSingular(NumericalError, ValueError):
    module = 'diffusion'
    operation = 'a_infinity'


class GridTooCoarse(NumericalError):
    module = 'diffusion'
    operation = 'solve_diffusion'


class CheckpointMissing(NumericalError, KeyError):
    pass


class MirrorOutsideOcean(NumericalError, ValueError):
    module = 'timereversal'
    operation = 'mirror_matrix'


class LobeNotResolved(NumericalError):
    module = 'timereversal'
    operation = 'refocus_metrics'


class StepTooLarge(NumericalError):
    module = 'montecarlo'
    operation = 'integrate_transfer'


class WorkerFailure(NumericalError):
    """
    Raised on the main process when a worker process pipes back a failure. The analyzed traceback of the worker is
    kept in `payload`.
    """
    module = 'process'
    operation = 'run_tasks'

    def __init__(self, message='', payload=None, **kwargs):
        super(WorkerFailure, self).__init__(message, **kwargs)
        self.payload = payload or {}


class KernelRankDeficient(UserWarning):
    pass
