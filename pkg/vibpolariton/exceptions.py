class PolaritonError(Exception):
    ...


class ConfigurationError(PolaritonError):
    'Invalid, missing or inconsistent configuration'

    def __init__(self, message, *, key=None, line=None):
        self.reason = message
        location = []
        if key is not None:
            location.append('key {!r}'.format(key))
        if line is not None:
            location.append('line {}'.format(line))
        if location:
            message = '{} ({})'.format(message, ', '.join(location))
        super().__init__(message)
        self.key = key
        self.line = line


class GridMismatchError(ConfigurationError):
    'Frequency or wavevector grids do not match'
    ...


class IncommensurateKError(ConfigurationError):
    'Wavevector is not commensurate with the simulation supercell'

    def __init__(self, message, *, allowed=None):
        super().__init__(message)
        self.allowed = allowed


class TimestepError(ConfigurationError):
    'Timestep too large for the fastest harmonic frequency'

    def __init__(self, message, *, omega_max=None):
        super().__init__(message)
        self.omega_max = omega_max


class InstabilityError(PolaritonError):
    'Negative squared frequency encountered'

    def __init__(self, message, *, k=None):
        super().__init__(message)
        self.k = k


class ConvergenceFailure(PolaritonError):
    'Self-consistency was not reached'

    def __init__(self, message, *, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class BathReconstructionError(PolaritonError):
    'Discretized bath does not reproduce the hybridization function'

    def __init__(self, message, *, error=None, n_modes=None):
        super().__init__(message)
        self.error = error
        self.n_modes = n_modes
