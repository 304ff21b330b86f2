"""
Line records of the journal and snapshot files.

Every line of either file is one of these models, encoded canonically by
`src.persistence.codec`. The `record` field names the line type.
"""
from typing import Any, Dict, List, Literal

from pydantic import BaseModel, ConfigDict, Field, StrictStr

from src.engine.models import ChangeEvent, Node, ReifiedRelationship, TypeVersionChain

FORMAT_VERSION = 1


class Command(BaseModel):
    """One public mutating operation with all its arguments, JSON-ready."""
    model_config = ConfigDict(extra="forbid")

    op: StrictStr
    args: Dict[str, Any] = Field(default_factory=dict)


class JournalHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: Literal["journal"] = "journal"
    format_version: int = FORMAT_VERSION
    base_sequence: int = Field(default=0, ge=0)


class JournalRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: Literal["entry"] = "entry"
    sequence: int = Field(ge=1)
    command: Command
    result_ids: List[StrictStr] = Field(default_factory=list)


class SnapshotHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: Literal["snapshot"] = "snapshot"
    format_version: int = FORMAT_VERSION
    last_sequence: int = Field(ge=0)
    node_counter: int = Field(ge=0)
    relationship_counter: int = Field(ge=0)
    event_sequence: int = Field(ge=0)


class NodeRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: Literal["node"] = "node"
    node: Node


class RelationshipRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: Literal["relationship"] = "relationship"
    relationship: ReifiedRelationship


class ChainRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: Literal["chain"] = "chain"
    chain: TypeVersionChain


class InboxRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: Literal["inbox"] = "inbox"
    node: StrictStr
    events: List[ChangeEvent]


class SnapshotTrailer(BaseModel):
    model_config = ConfigDict(extra="forbid")

    record: Literal["end"] = "end"
    nodes: int = Field(ge=0)
    relationships: int = Field(ge=0)
    chains: int = Field(ge=0)
    inboxes: int = Field(ge=0)
