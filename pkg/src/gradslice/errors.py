"""Exception types raised across the slicing pipeline.

Each pipeline stage has a base class so the CLI can map failures onto exit
codes without inspecting messages.
"""


class GradsliceError(Exception):
    """Root of every error raised by this package."""


# --- design language -------------------------------------------------------

class DesignError(GradsliceError):
    pass


class DesignSyntaxError(DesignError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ArityError(DesignError):
    pass


class UnknownIdentifier(DesignError):
    pass


class EvalError(DesignError):
    pass


class MeshNotLoaded(DesignError):
    pass


# --- geometry --------------------------------------------------------------

class GeometryError(GradsliceError):
    pass


class ResolutionError(GeometryError):
    pass


class NumericalDegeneracy(GeometryError):
    def __init__(self, message, coordinates=None):
        self.coordinates = coordinates
        if coordinates is not None:
            message = f"{message} at {coordinates}"
        super().__init__(message)


class UncoveredSegment(GeometryError):
    pass


class StlError(GeometryError):
    pass


# --- palette / planning ----------------------------------------------------

class PaletteError(GradsliceError):
    pass


class InvalidCount(PaletteError):
    pass


class BandOverlap(PaletteError):
    pass


class Unsupported(PaletteError):
    pass


class PlanningError(GradsliceError):
    pass


class BedOverflow(PlanningError):
    pass


class OrderInversion(PlanningError):
    pass


# --- machine output --------------------------------------------------------

class EmissionError(GradsliceError):
    pass


class InvalidBead(EmissionError):
    pass


class OutOfRange(EmissionError):
    pass


class BedBounds(EmissionError):
    pass


class StateMissing(EmissionError):
    pass


class GcodeParseError(EmissionError):
    pass


class ConfigError(GradsliceError):
    pass


# --- simulation ------------------------------------------------------------

class SimulationError(GradsliceError):
    pass


class NoTransition(SimulationError):
    pass


class NonConvergence(SimulationError):
    pass
