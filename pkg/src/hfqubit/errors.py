"""Exception hierarchy; each family maps to one CLI exit code."""


class HfqubitError(Exception):
    exit_code = 1
    kind = "error"


class ValidationError(HfqubitError, ValueError):
    exit_code = 2
    kind = "validation"


class SpeciesFormatError(ValidationError):
    kind = "species_format"


class DataMissingError(HfqubitError):
    exit_code = 3
    kind = "data_missing"


class NumericalError(HfqubitError, ArithmeticError):
    exit_code = 4
    kind = "numerical"


class LabelingError(NumericalError):
    kind = "labeling"


class NonConvergenceError(NumericalError):
    kind = "non_convergence"
