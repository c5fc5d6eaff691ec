"""Error taxonomy.

Every failure that crosses a module boundary is a ``PlayroomError`` with a
stable ``code`` string; the protocol layer forwards codes verbatim.
"""

from __future__ import annotations


class PlayroomError(Exception):
    """Base class; ``code`` is the wire-visible identifier."""

    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


# -- catalog ----------------------------------------------------------------

class ParseError(PlayroomError):
    code = "ParseError"


class SchemaError(PlayroomError):
    code = "SchemaError"


class EmptyFilter(PlayroomError):
    code = "EmptyFilter"


# -- world ------------------------------------------------------------------

class PlacementExhausted(PlayroomError):
    code = "PlacementExhausted"

    def __init__(self, message: str = "", attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class BadGrid(PlayroomError):
    code = "BadGrid"


class Occupied(PlayroomError):
    code = "Occupied"


class OutOfGrid(PlayroomError):
    code = "OutOfGrid"


class UnknownInstance(PlayroomError):
    code = "UnknownInstance"


# -- kinetics ---------------------------------------------------------------

class IdenticalOperands(PlayroomError):
    code = "IdenticalOperands"


class MissingObserver(PlayroomError):
    code = "MissingObserver"


# -- agents -----------------------------------------------------------------

class BadCommand(PlayroomError):
    code = "BadCommand"


class Busy(PlayroomError):
    code = "Busy"


class OutOfReach(PlayroomError):
    code = "OutOfReach"


class HandFull(PlayroomError):
    code = "HandFull"


class HandEmpty(PlayroomError):
    code = "HandEmpty"


class NotInteractable(PlayroomError):
    code = "NotInteractable"


class UnknownTarget(PlayroomError):
    code = "UnknownTarget"


class Unreachable(PlayroomError):
    code = "Unreachable"


# -- lessons ----------------------------------------------------------------

class BadBinding(PlayroomError):
    code = "BadBinding"


class MissingBinding(PlayroomError):
    code = "MissingBinding"


class InsufficientObjects(PlayroomError):
    code = "InsufficientObjects"


class BindFailure(PlayroomError):
    code = "BindFailure"


# -- language ---------------------------------------------------------------

class UnparseablePhrase(PlayroomError):
    code = "UnparseablePhrase"


class UnknownNoun(PlayroomError):
    code = "UnknownNoun"


class UnknownColor(PlayroomError):
    code = "UnknownColor"


# -- tasks ------------------------------------------------------------------

class NoViableTask(PlayroomError):
    code = "NoViableTask"


class KindMismatch(PlayroomError):
    code = "KindMismatch"


class UnknownTask(PlayroomError):
    code = "UnknownTask"


# -- sensors ----------------------------------------------------------------

class BadCamera(PlayroomError):
    code = "BadCamera"


# -- protocol / episodes ----------------------------------------------------

class ProtocolError(PlayroomError):
    code = "ProtocolError"


class UnknownSession(PlayroomError):
    code = "UnknownSession"


class UnknownScript(PlayroomError):
    code = "UnknownScript"


class CorruptEpisode(PlayroomError):
    code = "CorruptEpisode"


class HashMismatch(PlayroomError):
    code = "HashMismatch"

    def __init__(self, message: str = "", divergent_tick: int | None = None):
        super().__init__(message)
        self.divergent_tick = divergent_tick
