"""Exception hierarchy shared by every module.

Each error carries an ``exit_code`` category used by the command-line front
end: configuration problems map to 2, data problems to 3 and numerical
failures to 4.
"""


class McuosError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(McuosError, ValueError):
    exit_code = 2
    kind = "config"


class DataError(McuosError, ValueError):
    exit_code = 3
    kind = "data"


class NumericalError(McuosError, ArithmeticError):
    exit_code = 4
    kind = "numerical"


class ShapeMismatch(DataError):
    pass


class InsufficientData(DataError):
    pass


class InsufficientObservations(DataError):
    pass


class EmptyOverlap(DataError):
    def __init__(self, i, j):
        self.pair = (int(i), int(j))
        super().__init__(f"signals {i} and {j} share no observed coordinate")


class UncoveredCoordinate(DataError):
    def __init__(self, u):
        self.coordinate = int(u)
        super().__init__(f"coordinate {u} is not observed by any training signal")


class UnsupportedKernel(ConfigError):
    pass


class ParseError(DataError):
    pass


class TilingError(DataError):
    pass


class RankDeficient(NumericalError):
    pass


class NumericalFailure(NumericalError):
    pass


class DegenerateNeighborhood(NumericalError):
    pass


class DegenerateDenominator(NumericalError):
    pass
