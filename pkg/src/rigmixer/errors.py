"""Exception hierarchy shared by every stage of the interpolation pipeline."""


class RigMixerError(Exception):
    """Base class for all errors raised by rigmixer."""


class DegenerateBone(RigMixerError):
    pass


class EmptyWeights(RigMixerError):
    pass


class EmptyPart(RigMixerError):
    pass


class UnclosablePart(RigMixerError):
    pass


class DegenerateBox(RigMixerError):
    pass


class IncompletePairs(RigMixerError):
    pass


class BrokenParent(RigMixerError):
    pass


class InvalidPairs(RigMixerError):
    """A correspondence list violates the pair invariants."""


class MissingGrid(RigMixerError):
    pass


class EmptyList(RigMixerError):
    pass


class NoSurface(RigMixerError):
    pass


class SingularSystem(RigMixerError):
    pass


class ParseError(RigMixerError):
    pass


class ValidationError(RigMixerError):
    pass


class PipelineError(RigMixerError):
    """Wraps a failure with the pipeline stage it happened in."""

    STAGES = ("correspond", "unify", "pose", "interpolate", "extract")

    def __init__(self, stage: str, cause: BaseException):
        if stage not in self.STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
