class ImtkError(Exception):
    """Base class for every failure the toolkit raises on purpose."""

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {"status": "error", "error": type(self).__name__, "message": str(self), **self.details}


class SingularMatrix(ImtkError):
    pass


class NoConvergence(ImtkError):
    pass


class ParseError(ImtkError):
    pass


class SchemaError(ImtkError):
    def __init__(self, message: str, field: str = ""):
        super().__init__(message, field=field)
        self.field = field


class LipschitzViolation(ImtkError):
    def __init__(self, message: str, y1=None, y2=None, ratio: float = float("nan")):
        super().__init__(message, ratio=ratio)
        self.y1 = y1
        self.y2 = y2
        self.ratio = ratio


class UnsupportedNeutralTerm(ImtkError):
    pass


class UnsupportedDriving(ImtkError):
    pass


class DimensionError(ImtkError):
    pass


class OnDichotomyLine(ImtkError):
    pass


class TailUnbounded(ImtkError):
    pass


class DegenerateGap(ImtkError):
    pass


class KappaExceedsOne(ImtkError):
    pass


class HamiltonianEigsOnAxis(ImtkError):
    pass


class XSingular(ImtkError):
    pass


class InertiaMismatch(ImtkError):
    pass


class NonFinite(ImtkError):
    pass


class DerivativeUnavailable(ImtkError):
    pass


class NewtonDiverged(ImtkError):
    def __init__(self, message: str, node: int = -1):
        super().__init__(message, node=node)
        self.node = node


class AdmissibilityLost(ImtkError):
    pass


class AnchorNotFound(ImtkError):
    pass


class SubspaceStalled(ImtkError):
    pass


class NotAdmissibleProjector(ImtkError):
    def __init__(self, message: str, violating: str = ""):
        super().__init__(message, violating=violating)
        self.violating = violating


class ContainmentViolated(ImtkError):
    def __init__(self, message: str, node: int = -1, distance: float = float("nan")):
        super().__init__(message, node=node, distance=distance)
        self.node = node
        self.distance = distance


class LeftGrid(ImtkError):
    pass


class Unbounded(ImtkError):
    pass


class CertificateLostAtEpsilon(ImtkError):
    def __init__(self, message: str, epsilon: float = float("nan")):
        super().__init__(message, epsilon=epsilon)
        self.epsilon = epsilon
