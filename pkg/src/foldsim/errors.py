"""Exception hierarchy for the simulation package."""


class FoldsimError(Exception):
    """Base class for all package errors."""


# --- mesh construction ---

class MeshError(FoldsimError):
    pass


class DegenerateTriangle(MeshError):
    pass


class NonManifoldEdge(MeshError):
    pass


class InconsistentOrientation(MeshError):
    pass


class EdgeNotFound(MeshError):
    pass


class EdgeAlreadyCrease(MeshError):
    pass


class NonPositiveDensity(MeshError):
    pass


class InvalidSectorAngle(MeshError):
    pass


# --- geometry kernels ---

class GeometryError(FoldsimError):
    pass


class OppositeNormals(GeometryError):
    """Interior edge folded to dihedral pi; the averaged normal vanishes."""


class SingularReference(GeometryError):
    pass


class DegenerateFace(GeometryError):
    pass


# --- energy / model ---

class DofLengthMismatch(FoldsimError):
    pass


# --- solver ---

class SolverError(FoldsimError):
    pass


class NewtonDiverged(SolverError):
    pass


class SingularSystem(SolverError):
    pass


class PenetrationUnderflow(SolverError):
    """A node approached the contact plane closer than the distance floor.

    Signals the stepper to retry with a smaller time step.
    """


class SnapDetected(SolverError):
    """Quasi-static continuation lost the equilibrium branch (snap-through).

    Carries the last converged state so the caller can switch to dynamics.
    """

    def __init__(self, message, state=None, load_fraction=None):
        super().__init__(message)
        self.state = state
        self.load_fraction = load_fraction


class OutOfRange(FoldsimError):
    pass


# --- scenario parsing ---

class ScenarioError(FoldsimError):
    pass


class SchemaError(ScenarioError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnknownGenerator(ScenarioError):
    pass


class ScheduleGap(ScenarioError):
    pass


class FitUnderdetermined(FoldsimError):
    pass
