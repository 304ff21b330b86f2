"""
Domain types of the meta-object store.

Nodes, reified relationships, type descriptions and the records produced by
propagation and event delivery. Everything here is a pydantic model so the
persistence layer can dump and validate it without hand-written codecs.
"""
import re
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StrictBool,
    StrictFloat,
    StrictInt,
    StrictStr,
    field_validator,
)
from pydantic.dataclasses import dataclass

# bool must come first so True never validates as an int
AttributeValue = Union[StrictBool, StrictInt, StrictFloat, StrictStr]
AttributeValueMap = Dict[str, AttributeValue]

NODE_PREFIX = "N"
RELATIONSHIP_PREFIX = "R"
ID_WIDTH = 6
NODE_ID_PATTERN = re.compile(r"^N\d{6,}$")


def format_id(prefix, counter):
    """Render a monotone counter as a fixed-width id, e.g. N000001."""
    return f"{prefix}{counter:0{ID_WIDTH}d}"


def id_key(identifier):
    """Sort key for generated ids; numeric so ids past N999999 still order correctly."""
    digits = identifier[1:]
    return (identifier[:1], int(digits) if digits.isdigit() else -1, identifier)


class Layer(str, Enum):
    INSTANCE = "Instance"
    MODEL = "Model"


class Level(str, Enum):
    BASE = "Base"
    META = "Meta"


class RelationshipKind(str, Enum):
    AGGREGATION = "Aggregation"
    GENERALIZATION = "Generalization"
    DESCRIBES = "Describes"
    DEPENDENCY = "Dependency"
    INSTANCE_OF = "InstanceOf"


class Direction(str, Enum):
    PARENT_TO_CHILD = "ParentToChild"
    CHILD_TO_PARENT = "ChildToParent"


class PropagationFlag(str, Enum):
    COPY = "copy"
    DELETE = "delete"
    MOVE = "move"
    VERSION = "version"
    NOTIFY = "notify"


class ValueKind(str, Enum):
    TEXT = "Text"
    INTEGER = "Integer"
    DECIMAL = "Decimal"
    FLAG = "Flag"
    NODE_REF = "NodeRef"


class EventOperation(str, Enum):
    ATTRIBUTE_SET = "AttributeSet"
    VERSION_BUMP = "VersionBump"
    DELETED = "Deleted"
    MESSAGE = "Message"


@dataclass(frozen=True)
class PropagationPolicy:
    """Which operations traverse a relationship."""

    copy: bool = False
    delete: bool = False
    move: bool = False
    version: bool = False
    notify: bool = False

    def enables(self, flag):
        return bool(getattr(self, PropagationFlag(flag).value))


class AttributeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: StrictStr = Field(min_length=1)
    value_kind: ValueKind


class TypeDescription(BaseModel):
    """
    Payload of a Model-layer node: the Class construct with its Attributes and Operations.

    Operation specs are names only; the store never executes them.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: StrictStr = Field(min_length=1)
    attribute_specs: List[AttributeSpec] = Field(default_factory=list)
    operation_specs: List[StrictStr] = Field(default_factory=list)
    version: StrictInt = Field(default=1, ge=1)

    @field_validator("attribute_specs")
    @classmethod
    def _unique_spec_names(cls, specs):
        seen = set()
        for spec in specs:
            if spec.name in seen:
                raise ValueError(f"duplicate attribute spec '{spec.name}'")
            seen.add(spec.name)
        return specs

    def spec(self, name):
        for spec in self.attribute_specs:
            if spec.name == name:
                return spec
        return None


class Node(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: StrictStr
    layer: Layer
    level: Level
    attributes: AttributeValueMap = Field(default_factory=dict)
    description: Optional[TypeDescription] = None
    version: StrictInt = Field(default=1, ge=1)

    @property
    def coordinate(self):
        return (self.layer, self.level)


class ReifiedRelationship(BaseModel):
    """A link promoted to an object: its own policy and attributes, one parent, ordered children."""
    model_config = ConfigDict(extra="forbid")

    id: StrictStr
    kind: RelationshipKind
    parent: StrictStr
    children: List[StrictStr] = Field(min_length=1)
    policy: PropagationPolicy = Field(default_factory=PropagationPolicy)
    attributes: AttributeValueMap = Field(default_factory=dict)

    @property
    def is_successor(self):
        return self.attributes.get("successor") is True


class ChangeEvent(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sequence: StrictInt = Field(ge=1)
    source: StrictStr
    operation: EventOperation
    detail: Union[StrictInt, StrictStr, AttributeValueMap]


class Delivery(BaseModel):
    model_config = ConfigDict(frozen=True)

    subscriber: str
    event: ChangeEvent


class DeletionReport(BaseModel):
    nodes: List[str] = Field(default_factory=list)
    relationships: List[str] = Field(default_factory=list)


class ReportEntry(BaseModel):
    node: str
    action: str
    target: Optional[str] = None


class PropagationReport(BaseModel):
    """Outcome of a propagated operation: affected nodes in order plus what happened to each."""
    operation: str
    entries: List[ReportEntry] = Field(default_factory=list)
    removed_relationships: List[str] = Field(default_factory=list)
    created_relationships: List[str] = Field(default_factory=list)
    id_map: Dict[str, str] = Field(default_factory=dict)
    deliveries: List[Delivery] = Field(default_factory=list)

    @property
    def nodes(self):
        return [entry.node for entry in self.entries]


class GraphView(BaseModel):
    """A semantic grouping handled as one object: the nodes and links reached over one kind."""
    root: str
    kind: RelationshipKind
    nodes: List[str]
    relationships: List[str]


class EvolutionDelta(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    added_specs: List[AttributeSpec] = Field(default_factory=list)
    removed_spec_names: List[StrictStr] = Field(default_factory=list)
    renamed: List[Tuple[StrictStr, StrictStr]] = Field(default_factory=list)

    @property
    def is_empty(self):
        return not (self.added_specs or self.removed_spec_names or self.renamed)

    def summary(self):
        parts = [f"+{spec.name}:{spec.value_kind.value}" for spec in self.added_specs]
        parts += [f"-{name}" for name in self.removed_spec_names]
        parts += [f"{old}->{new}" for old, new in self.renamed]
        return " ".join(parts)


class VersionEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: StrictInt = Field(ge=1)
    node: StrictStr
    delta: Optional[EvolutionDelta] = None
    sequence: StrictInt = Field(ge=0)


class TypeVersionChain(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: StrictStr
    level: Level
    versions: List[VersionEntry] = Field(default_factory=list)

    @property
    def latest(self):
        return self.versions[-1]

    def entry(self, version):
        if isinstance(version, int) and not isinstance(version, bool) and 1 <= version <= len(self.versions):
            return self.versions[version - 1]
        return None

    def version_of(self, node_id):
        for entry in self.versions:
            if entry.node == node_id:
                return entry.version
        return None


class HistoryEntry(BaseModel):
    version: int
    summary: str
    delta: Optional[EvolutionDelta] = None
    sequence: int
