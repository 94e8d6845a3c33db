"""Exception hierarchy.

Everything a caller can fix by changing its input derives from
:class:`ElifeValidationError`; everything that signals a numerical failure
on valid input derives from :class:`ElifeNumericalError`. The command line
maps the two roots to exit codes 2 and 3.
"""


class ElifeValidationError(ValueError):
    pass


class ElifeNumericalError(ArithmeticError):
    pass


# data model

class BoundsError(ElifeValidationError):
    pass


class TruncationError(ElifeValidationError):
    pass


class CodeError(ElifeValidationError):
    pass


class IoError(ElifeValidationError):  # noqa: N818
    pass


class ParseError(ElifeValidationError):
    def __init__(self, msg, row, column=None):
        super().__init__(msg, row, column)

    @property
    def msg(self):
        return self.args[0]

    @property
    def row(self):
        return self.args[1]

    @property
    def column(self):
        return self.args[2]

    def __str__(self):
        where = "row {}".format(self.row)
        if self.column is not None:
            where += ", column {!r}".format(self.column)
        return "{}: {}".format(where, self.msg)


class EmptyDatasetError(ElifeValidationError):
    pass


class InvalidThresholdError(ElifeValidationError):
    pass


class NoExceedancesError(ElifeValidationError):
    pass


class AmbiguousExceedanceError(ElifeValidationError):
    def __init__(self, msg, index):
        super().__init__(msg, index)

    @property
    def msg(self):
        return self.args[0]

    @property
    def index(self):
        return self.args[1]

    def __str__(self):
        return "record {}: {}".format(self.index, self.msg)


# families

class DomainError(ElifeValidationError):
    pass


class ConstraintError(ElifeValidationError):
    pass


# fitting and inference

class NonConvergenceError(ElifeNumericalError):
    pass


class SingularInformationError(ElifeNumericalError):
    pass


class ForbiddenComparisonError(ElifeValidationError):
    pass


class NotNestedError(ElifeValidationError):
    pass


class OptimizationOrderError(ElifeNumericalError):
    pass


class EmptyStratumError(ElifeValidationError):
    def __init__(self, msg, label):
        super().__init__(msg, label)

    @property
    def label(self):
        return self.args[1]

    def __str__(self):
        return self.args[0]


class GridTooNarrowError(ElifeNumericalError):
    pass


class DegenerateTableError(ElifeValidationError):
    pass


# npmle

class EmptyIntervalSetError(ElifeNumericalError):
    pass


class MaxIterError(ElifeNumericalError):
    pass


# sampling and plots

class ZeroMassError(ElifeValidationError):
    pass


class NoObservedFailuresError(ElifeValidationError):
    pass
