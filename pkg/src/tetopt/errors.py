"""Exception types shared across the package."""


class MeshError(Exception):
    """Base class for all mesh related failures."""


class DegenerateCell(MeshError):
    """A tetrahedron has (near) zero or negative volume."""


class IndexOutOfRange(MeshError, IndexError):
    """A cell references a vertex that does not exist."""


class NotAnEdge(MeshError):
    pass


class InvalidMesh(MeshError):
    """Raised by ``validate`` when a structural invariant is broken."""


class EmptyMesh(MeshError):
    pass


class NotFlippable(MeshError):
    pass


class CorruptRecord(MeshError):
    pass


class MissingSurface(MeshError):
    pass


class OpenBoundary(MeshError):
    pass


class SingularSystem(MeshError):
    pass


class VanishingGradient(MeshError):
    pass


class StepFloorReached(MeshError):
    """The integrator could not find a valid step above the step floor."""


class InvalidInput(MeshError):
    pass


class ParseError(MeshError):
    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class CountMismatch(ParseError):
    pass


class MeshIndexError(ParseError, IndexError):
    pass


class NoConvergence(UserWarning):
    """A projection hit its iteration cap; the best iterate is returned."""
