"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad inputs or
configuration, CLI exit code 2) and :class:`DataError` (unreadable or
inconsistent files, CLI exit code 1).
"""


class LidarTwinError(Exception):
    pass


class ValidationError(LidarTwinError, ValueError):
    pass


class DataError(LidarTwinError, OSError):
    pass


class EmptyMesh(ValidationError):
    pass


class DegenerateTriangle(ValidationError):
    pass


class EmptyResult(ValidationError):
    pass


class InvalidScale(ValidationError):
    pass


class SpecInconsistent(ValidationError):
    pass


class TooManyActors(ValidationError):
    pass


class InvalidDistribution(ValidationError):
    pass


class SnapshotMismatch(ValidationError):
    pass


class EmptyCloud(ValidationError):
    pass


class DegenerateBaseline(ValidationError):
    pass


class ConfigError(ValidationError):
    """Collects every schema problem found in a scene config."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ObjParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}, line {line_no}: {message}")


class CorruptDataset(DataError):
    pass


class IncompleteDataset(DataError):
    pass
