"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for bad input, 3 for convergence failures, 4 for cohorts that are too small.
"""


class EnergyRankError(Exception):
    exit_code = 2

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class InputError(EnergyRankError):
    """Malformed or missing input data."""


class MissingFile(InputError):
    pass


class MissingColumn(InputError):
    def __init__(self, path, column):
        self.path = str(path)
        self.column = column
        super().__init__(f"{self.path}: missing column {column!r}")


class BadValue(InputError):
    def __init__(self, row, column, message):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {message}")


class DuplicateId(InputError):
    def __init__(self, row, building_id):
        self.row = row
        self.building_id = building_id
        super().__init__(f"row {row}: duplicate id {building_id!r}")


class NoOverlap(InputError):
    pass


class ZeroArea(InputError):
    pass


class Unfittable(InputError):
    """Too few aligned days to fit a model."""


class DegenerateDesign(InputError):
    pass


class ZeroDegreeDays(InputError):
    pass


class MissingLocation(InputError):
    pass


class MissingEcdf(InputError):
    pass


class MissingPosterior(InputError):
    pass


class EmptyGroup(InputError):
    pass


class IdMismatch(InputError):
    pass


class BadSpec(InputError):
    pass


class NonConvergence(EnergyRankError):
    exit_code = 3


class InsufficientCohort(EnergyRankError):
    exit_code = 4


class DegenerateData(UserWarning):
    """All KDE inputs identical; a point-mass CDF was used instead."""


class UsageError(InputError):
    """Malformed command line."""
