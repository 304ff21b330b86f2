"""
Error hierarchy for the meta-object store.

Every error carries the module that raised it and the family the CLI maps to
an exit code (domain errors exit 3, io errors exit 4). The error name shown to
users is the class name.
"""


class EngineError(Exception):
    """Base class for every error raised by the store."""

    module = "engine"
    family = "domain"

    @property
    def name(self):
        return type(self).__name__


# graph-core
class UnknownNode(EngineError):
    module = "graph-core"


class UnknownRelationship(EngineError):
    module = "graph-core"


class MalformedPayload(EngineError):
    module = "graph-core"


class EmptyChildren(EngineError):
    module = "graph-core"


# relations
class CycleRejected(EngineError):
    module = "relations"


class NotAggregated(EngineError):
    module = "relations"


class NotAMediator(EngineError):
    module = "relations"


# layers
class LayerRuleViolation(EngineError):
    module = "layers"


class SchemaMismatch(EngineError):
    module = "layers"


class AlreadyInstantiated(EngineError):
    module = "layers"


class SquareViolation(EngineError):
    module = "layers"


class AmbiguousInheritance(EngineError):
    module = "layers"


class DuplicateType(EngineError):
    module = "layers"


# evolution
class UnknownType(EngineError):
    module = "evolution"


class UnknownVersion(EngineError):
    module = "evolution"


class InvalidDelta(EngineError):
    module = "evolution"


class MissingFill(EngineError):
    module = "evolution"


class ImmutableHistory(EngineError):
    module = "evolution"


# store
class StoreError(EngineError):
    module = "store"
    family = "io"


class IoFailure(StoreError):
    pass


class CorruptSnapshot(StoreError):
    pass


class CorruptJournal(StoreError):
    pass


class GapInJournal(StoreError):
    pass


class UnknownCommand(StoreError):
    pass


class ReplayDivergence(StoreError):
    pass


# cli
class ExpectationFailed(EngineError):
    module = "cli"


class MalformedScenario(EngineError):
    module = "cli"
    family = "io"
