"""Exception hierarchy shared by every layer of the engine."""


class PmGraphError(Exception):
    pass


# --- persistent region -------------------------------------------------------

class RegionError(PmGraphError):
    pass


class CapacityTooSmall(RegionError):
    pass


class OutOfBounds(RegionError):
    pass


class Misaligned(RegionError):
    pass


class BadMagic(RegionError):
    pass


class VersionMismatch(RegionError):
    pass


class SimulatedCrash(RegionError):
    """Raised inside the engine when an armed crash point is reached."""

    def __init__(self, event):
        super().__init__(f"simulated power failure at event {event}")
        self.event = event


# --- graph engine ------------------------------------------------------------

class BadConfig(PmGraphError):
    pass


class RegionCapacityExceeded(PmGraphError):
    pass


class CheckpointAreaTooSmall(PmGraphError):
    pass


class UnknownVertex(PmGraphError, KeyError):
    def __init__(self, v):
        super().__init__(v)
        self.vertex = v

    def __str__(self):
        return f"unknown vertex {self.vertex}"


class CorruptRegion(PmGraphError):
    pass


class Overflow(PmGraphError):
    """A redistribution was asked to fit more items than its range holds."""


# --- analytics / ingest / cli ------------------------------------------------

class EmptyGraph(PmGraphError):
    pass


class ParseError(PmGraphError):
    def __init__(self, line, msg="malformed edge"):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class IdOverflow(PmGraphError):
    pass


class BadParams(PmGraphError):
    pass


class UnknownKernel(PmGraphError):
    pass
