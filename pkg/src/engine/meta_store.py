"""
The meta-object store: one object exposing every public operation.

Mutating operations are commands. Each runs under the store lock, validates
everything before it changes anything, and on success is appended to the
journal (when one is attached) with the ids it allocated. Replaying the same
commands on an empty store rebuilds the same state, ids included.
"""
import functools
import inspect
import logging
import threading
from typing import List

from pydantic import TypeAdapter, ValidationError

from src.engine import evolution, layers, relations
from src.engine.errors import (
    AmbiguousInheritance,
    DuplicateType,
    EmptyChildren,
    GapInJournal,
    ImmutableHistory,
    LayerRuleViolation,
    MalformedPayload,
    ReplayDivergence,
    UnknownCommand,
    UnknownVersion,
)
from src.engine.evolution import EvolutionRegistry
from src.engine.graph import ReifiedGraph, check_payload
from src.engine.models import (
    NODE_PREFIX,
    RELATIONSHIP_PREFIX,
    AttributeValue,
    AttributeValueMap,
    DeletionReport,
    EvolutionDelta,
    EventOperation,
    GraphView,
    Layer,
    Level,
    PropagationFlag,
    PropagationPolicy,
    RelationshipKind,
    TypeDescription,
    format_id,
    id_key,
)
from src.engine.relations import EventChannel
from src.persistence.codec import to_plain
from src.persistence.records import Command, JournalRecord

logger = logging.getLogger(__name__)

COMMANDS = (
    "create_node",
    "create_relationship",
    "delete_node",
    "set_attribute",
    "set_relationship_attribute",
    "set_policy",
    "propagate_delete",
    "propagate_copy",
    "propagate_move",
    "propagate_version",
    "publish_change",
    "mediate",
    "link_instance_of",
    "link_described_by",
    "evolve_type",
    "migrate_instance",
)

RESERVED_LINK_ATTRIBUTES = ("successor",)

_VALUE = TypeAdapter(AttributeValue)
_VALUES = TypeAdapter(AttributeValueMap)
_POLICY = TypeAdapter(PropagationPolicy)


def synchronized(method):
    @functools.wraps(method)
    def wrapper(self, *args, **kwargs):
        with self._lock:
            return method(self, *args, **kwargs)

    return wrapper


def _coerce(enum_cls, value):
    try:
        return enum_cls(value)
    except ValueError:
        raise MalformedPayload(f"'{value}' is not a valid {enum_cls.__name__}") from None


class MetaObjectStore:
    """
    Description-driven object store.

    Holds the reified graph, the event channel and the type version chains.
    Single writer, many readers: every public method takes the store lock, so
    a reader never sees half of a propagation.
    """

    def __init__(self, journal=None):
        """
        Initialize an empty store.

        Args:
            journal: Optional sink with an `append(JournalRecord)` method
        """
        self.graph = ReifiedGraph()
        self.channel = EventChannel(self.graph)
        self.registry = EvolutionRegistry()
        self.command_sequence = 0
        self.journal = journal
        self.last_result_ids: List[str] = []
        self._pending_sequence = 0
        self._lock = threading.RLock()
        self._handlers = {op: getattr(self, f"_do_{op}") for op in COMMANDS}

    # ---------- command execution ----------
    def execute(self, op, args=None):
        """
        Run one mutating command and journal it.

        Args:
            op: Command name, one of COMMANDS
            args: Keyword arguments, models or JSON-ready values

        Returns:
            The command's result (an id, a report or a delivery list)

        Raises:
            UnknownCommand: If the command or its argument names are unknown
            EngineError: Whatever the command itself rejects; the store is unchanged
        """
        args = to_plain(args or {})
        handler = self._handlers.get(op)
        if handler is None:
            raise UnknownCommand(f"unknown command '{op}'")
        try:
            inspect.signature(handler).bind(**args)
        except TypeError as e:
            raise UnknownCommand(f"{op}: {e}") from None

        with self._lock:
            nodes_before = self.graph.node_counter
            rels_before = self.graph.relationship_counter
            self._pending_sequence = self.command_sequence + 1
            try:
                result = handler(**args)
            except ValidationError as e:
                raise MalformedPayload(f"{op}: {e.errors()[0]['msg']}") from None
            self.command_sequence = self._pending_sequence
            self.last_result_ids = [
                format_id(NODE_PREFIX, n) for n in range(nodes_before + 1, self.graph.node_counter + 1)
            ] + [
                format_id(RELATIONSHIP_PREFIX, r) for r in range(rels_before + 1, self.graph.relationship_counter + 1)
            ]
            if self.journal is not None:
                self.journal.append(
                    JournalRecord(
                        sequence=self.command_sequence,
                        command=Command(op=op, args=args),
                        result_ids=self.last_result_ids,
                    )
                )
            logger.debug(f"#{self.command_sequence} {op} -> {self.last_result_ids}")
            return result

    def apply(self, record):
        """
        Re-execute a journal record.

        Raises:
            GapInJournal: If the record does not follow the last applied sequence
            ReplayDivergence: If the command allocates different ids than recorded
        """
        with self._lock:
            if record.sequence != self.command_sequence + 1:
                raise GapInJournal(f"expected record {self.command_sequence + 1}, found {record.sequence}")
            self.execute(record.command.op, record.command.args)
            if self.last_result_ids != list(record.result_ids):
                raise ReplayDivergence(
                    f"record {record.sequence} allocated {self.last_result_ids}, journal says {record.result_ids}"
                )

    # ---------- graph-core ----------
    def create_node(self, layer, level, description=None, attributes=None) -> str:
        return self.execute(
            "create_node", {"layer": layer, "level": level, "description": description, "attributes": attributes}
        )

    def create_relationship(self, kind, parent, children, policy=None, attributes=None) -> str:
        return self.execute(
            "create_relationship",
            {"kind": kind, "parent": parent, "children": list(children), "policy": policy, "attributes": attributes},
        )

    def delete_node(self, node) -> DeletionReport:
        return self.execute("delete_node", {"node": node})

    def set_attribute(self, node, name, value):
        return self.execute("set_attribute", {"node": node, "name": name, "value": value})

    def set_relationship_attribute(self, relationship, name, value):
        return self.execute("set_relationship_attribute", {"relationship": relationship, "name": name, "value": value})

    def set_policy(self, relationship, policy):
        return self.execute("set_policy", {"relationship": relationship, "policy": policy})

    @synchronized
    def get_node(self, node):
        return self.graph.node(node).model_copy(deep=True)

    @synchronized
    def get_relationship(self, relationship):
        return self.graph.relationship(relationship).model_copy(deep=True)

    @synchronized
    def neighbors(self, node, kind, direction) -> List[str]:
        return self.graph.neighbors(node, _coerce(RelationshipKind, kind), direction)

    @synchronized
    def node_ids(self) -> List[str]:
        return sorted(self.graph.nodes, key=id_key)

    @synchronized
    def relationship_ids(self) -> List[str]:
        return sorted(self.graph.relationships, key=id_key)

    # ---------- relations ----------
    @synchronized
    def closure(self, start, kind, flag) -> List[str]:
        return relations.closure(self.graph, start, _coerce(RelationshipKind, kind), _coerce(PropagationFlag, flag))

    @synchronized
    def check_antisymmetry(self, kind, parent, children) -> bool:
        return relations.check_antisymmetry(self.graph, _coerce(RelationshipKind, kind), parent, list(children))

    def propagate_delete(self, start):
        return self.execute("propagate_delete", {"start": start})

    def propagate_copy(self, start):
        return self.execute("propagate_copy", {"start": start})

    def propagate_move(self, start, new_parent):
        return self.execute("propagate_move", {"start": start, "new_parent": new_parent})

    def propagate_version(self, start):
        return self.execute("propagate_version", {"start": start})

    def publish_change(self, source, event):
        """
        Publish an event from a node to its subscribers.

        The event needs an operation and a detail; the channel stamps the
        sequence number and the source.
        """
        return self.execute("publish_change", {"source": source, "event": event})

    def mediate(self, mediator, message):
        return self.execute("mediate", {"mediator": mediator, "message": message})

    @synchronized
    def inbox(self, node):
        return self.channel.inbox(node)

    @synchronized
    def subgraph(self, root, kind) -> GraphView:
        """The grouping reached from root over every link of one kind, as a single object."""
        kind = _coerce(RelationshipKind, kind)
        self.graph.node(root)
        nodes, frontier = [root], [root]
        while frontier:
            found = set()
            for node_id in frontier:
                for rel in self.graph.relationships_parented(node_id, kind):
                    found.update(c for c in rel.children if c not in nodes)
            frontier = sorted(found, key=id_key)
            nodes.extend(frontier)
        rels = sorted(
            {rel.id for node_id in nodes for rel in self.graph.relationships_parented(node_id, kind)},
            key=id_key,
        )
        return GraphView(root=root, kind=kind, nodes=nodes, relationships=rels)

    # ---------- layers ----------
    def link_instance_of(self, instance, model) -> str:
        return self.execute("link_instance_of", {"instance": instance, "model": model})

    def link_described_by(self, base, meta) -> str:
        return self.execute("link_described_by", {"base": base, "meta": meta})

    @synchronized
    def effective_schema(self, node):
        return layers.effective_schema(self.graph, node)

    @staticmethod
    def builtin_constructs() -> List[str]:
        return layers.builtin_constructs()

    @synchronized
    def construct_of(self, object_id) -> str:
        return layers.construct_of(self.graph, object_id)

    @synchronized
    def construct_census(self):
        return layers.construct_census(self.graph)

    @synchronized
    def superclasses(self, node) -> List[str]:
        return layers.superclasses(self.graph, node)

    @synchronized
    def subclasses(self, node) -> List[str]:
        return layers.subclasses(self.graph, node)

    @synchronized
    def describers_of(self, node) -> List[str]:
        return layers.describers_of(self.graph, node)

    @synchronized
    def described_by_meta(self, meta) -> List[str]:
        return layers.described_by_meta(self.graph, meta)

    @synchronized
    def conforms(self, node) -> bool:
        """True if the node's values fit its model (unclassified nodes trivially do)."""
        model = layers.classifier_of(self.graph, node)
        if model is None:
            return True
        schema = layers.effective_schema(self.graph, model)
        return not layers.conformance_problems(None, self.graph.node(node).attributes, schema)

    # ---------- evolution ----------
    def evolve_type(self, name, delta) -> str:
        return self.execute("evolve_type", {"name": name, "delta": delta})

    def migrate_instance(self, instance, to_version, fill=None):
        return self.execute("migrate_instance", {"instance": instance, "to_version": to_version, "fill": fill})

    @synchronized
    def instances_of(self, name, version="any") -> List[str]:
        return self.registry.instances_of(self.graph, name, version)

    @synchronized
    def version_history(self, name):
        return self.registry.history(name)

    @synchronized
    def replay_description(self, name) -> TypeDescription:
        return self.registry.replay(self.graph, name)

    @synchronized
    def chain(self, name):
        return self.registry.chain(name).model_copy(deep=True)

    # ---------- audit ----------
    @synchronized
    def audit(self) -> List[str]:
        """Every store-wide invariant; an empty list means the store is consistent."""
        problems = self.graph.audit() + layers.audit(self.graph) + self.registry.audit(self.graph)
        for node_id, events in self.channel.inboxes.items():
            if node_id not in self.graph.nodes:
                problems.append(f"inbox of missing node {node_id}")
            sequences = [event.sequence for event in events]
            if sequences != sorted(set(sequences)):
                problems.append(f"{node_id}: inbox sequences not strictly increasing")
        return problems

    @synchronized
    def restore(self, nodes, relationships, chains, inboxes, last_sequence, node_counter, relationship_counter,
                event_sequence):
        """Replace the whole state with persisted records."""
        self.graph.restore(nodes, relationships, node_counter, relationship_counter)
        self.registry.restore(chains)
        self.channel.inboxes = {node_id: list(events) for node_id, events in inboxes.items()}
        self.channel.sequence = event_sequence
        self.command_sequence = last_sequence

    # ---------- handlers ----------
    def _do_create_node(self, layer, level, description=None, attributes=None):
        layer, level = _coerce(Layer, layer), _coerce(Level, level)
        description = TypeDescription.model_validate(description) if description is not None else None
        attributes = _VALUES.validate_python(attributes or {})
        check_payload(layer, level, description, attributes)
        if description is not None:
            if description.version != 1:
                raise MalformedPayload("new type descriptions start at version 1; later versions come from evolve_type")
            if layer == Layer.MODEL:
                self.registry.ensure_new(description.name)
            self._ensure_unique_description(level, description)
        node_id = self.graph.create_node(layer, level, description, attributes)
        if layer == Layer.MODEL:
            self.registry.register(description.name, level, node_id, self._pending_sequence)
        return node_id

    def _ensure_unique_description(self, level, description):
        for node in self.graph.nodes.values():
            existing = node.description
            if node.level == level and existing is not None and (existing.name, existing.version) == (
                description.name,
                description.version,
            ):
                raise DuplicateType(f"{level.value}-level description {description.name} v{description.version} exists")

    def _do_create_relationship(self, kind, parent, children, policy=None, attributes=None):
        attributes = _VALUES.validate_python(attributes or {})
        for name in RESERVED_LINK_ATTRIBUTES:
            if name in attributes:
                raise MalformedPayload(f"'{name}' is a reserved relationship attribute")
        policy = _POLICY.validate_python(policy) if policy is not None else None
        return self._link(_coerce(RelationshipKind, kind), parent, list(children), policy, attributes)

    def _link(self, kind, parent, children, policy=None, attributes=None):
        self.graph.require_nodes([parent, *children])
        if not children:
            raise EmptyChildren("a relationship needs at least one child")
        policy = policy if policy is not None else relations.default_policy(kind)
        if kind == RelationshipKind.DESCRIBES:
            for child in children:
                layers.check_described_by(self.graph, child, parent)
        elif kind == RelationshipKind.INSTANCE_OF:
            for child in children:
                layers.check_instance_of(self.graph, child, parent)
        elif kind == RelationshipKind.AGGREGATION:
            relations.ensure_antisymmetry(self.graph, kind, parent, children)
        elif kind == RelationshipKind.GENERALIZATION:
            layers.check_generalization(self.graph, parent, children)
            relations.ensure_antisymmetry(self.graph, kind, parent, children)

        rel_id = self.graph.create_relationship(kind, parent, children, policy, attributes)
        if kind == RelationshipKind.GENERALIZATION:
            self._ensure_unambiguous(rel_id, children)
        return rel_id

    def _ensure_unambiguous(self, rel_id, children):
        """Undo a fresh Generalization link if any subclass's schema became ambiguous."""
        affected = []
        for child in children:
            affected.extend([child, *layers.subclasses(self.graph, child)])
        try:
            for node_id in affected:
                if self.graph.node(node_id).description is not None:
                    layers.effective_schema(self.graph, node_id)
        except AmbiguousInheritance:
            self.graph.remove_relationship(rel_id)
            self.graph.relationship_counter -= 1
            raise

    def _guard_history(self, start):
        doomed = relations.closure(self.graph, start, RelationshipKind.AGGREGATION, PropagationFlag.DELETE)
        protected = [node_id for node_id in doomed if self.registry.is_protected(node_id)]
        if protected:
            raise ImmutableHistory(f"type version nodes cannot be deleted: {', '.join(protected)}")

    def _do_delete_node(self, node):
        self._guard_history(node)
        report = relations.propagate_delete(self.graph, self.channel, node)
        return DeletionReport(nodes=report.nodes, relationships=report.removed_relationships)

    def _do_propagate_delete(self, start):
        self._guard_history(start)
        return relations.propagate_delete(self.graph, self.channel, start)

    def _do_propagate_copy(self, start):
        return relations.propagate_copy(self.graph, start)

    def _do_propagate_move(self, start, new_parent):
        return relations.propagate_move(self.graph, start, new_parent)

    def _do_propagate_version(self, start):
        return relations.propagate_version(self.graph, self.channel, start)

    def _do_set_attribute(self, node, name, value):
        target = self.graph.node(node)
        if target.layer != Layer.INSTANCE:
            raise LayerRuleViolation(f"'{node}' is a type description; evolve it instead of editing it")
        if not isinstance(name, str) or not name:
            raise MalformedPayload("attribute name must be a non-empty string")
        value = _VALUE.validate_python(value)
        model = layers.classifier_of(self.graph, node)
        if model is not None:
            layers.ensure_conforms(self.graph, {**target.attributes, name: value}, model, assigned={name})
        target.attributes[name] = value
        return self.channel.emit(node, EventOperation.ATTRIBUTE_SET, name)

    def _do_set_relationship_attribute(self, relationship, name, value):
        rel = self.graph.relationship(relationship)
        if name in RESERVED_LINK_ATTRIBUTES:
            raise MalformedPayload(f"'{name}' is a reserved relationship attribute")
        rel.attributes[name] = _VALUE.validate_python(value)

    def _do_set_policy(self, relationship, policy):
        rel = self.graph.relationship(relationship)
        rel.policy = _POLICY.validate_python(policy)

    def _do_publish_change(self, source, event):
        self.graph.node(source)
        if not isinstance(event, dict) or "operation" not in event or "detail" not in event:
            raise MalformedPayload("an event needs an operation and a detail")
        stamped = self.channel.next_event(source, _coerce(EventOperation, event["operation"]), event["detail"])
        return self.channel.publish_change(source, stamped)

    def _do_mediate(self, mediator, message):
        return self.channel.mediate(mediator, _VALUES.validate_python(message))

    def _do_link_instance_of(self, instance, model):
        return self._link(RelationshipKind.INSTANCE_OF, model, [instance])

    def _do_link_described_by(self, base, meta):
        return self._link(RelationshipKind.DESCRIBES, meta, [base])

    def _do_evolve_type(self, name, delta):
        chain = self.registry.chain(name)
        delta = EvolutionDelta.model_validate(delta)
        previous = chain.latest.node
        current = self.graph.node(previous).description
        evolution.validate_delta(current, delta)
        evolved = evolution.apply_delta(current, delta)
        inherited = [
            rel
            for rel in self.graph.relationships_childed(previous, RelationshipKind.GENERALIZATION)
            if not rel.is_successor
        ]
        layers.compose_schema(self.graph, name, evolved.attribute_specs, [rel.parent for rel in inherited])

        node_id = self.graph.create_node(Layer.MODEL, chain.level, evolved)
        self.graph.create_relationship(
            RelationshipKind.GENERALIZATION, previous, [node_id], PropagationPolicy(), {"successor": True}
        )
        for rel in inherited:
            self.graph.create_relationship(
                RelationshipKind.GENERALIZATION, rel.parent, [node_id], rel.policy, dict(rel.attributes)
            )
        self.registry.append(name, node_id, delta, self._pending_sequence)
        self.channel.emit(previous, EventOperation.VERSION_BUMP, evolved.version)
        logger.info(f"Evolved {name} to v{evolved.version} as {node_id}")
        return node_id

    def _do_migrate_instance(self, instance, to_version, fill=None):
        target_node = self.graph.node(instance)
        model = layers.classifier_of(self.graph, instance)
        located = self.registry.locate(model) if model else None
        if located is None:
            raise UnknownVersion(f"'{instance}' is not an instance of a versioned type")
        if not isinstance(to_version, int) or isinstance(to_version, bool):
            raise UnknownVersion(f"version {to_version!r} is not an ordinal")
        name, from_version = located
        target = self.registry.entry(name, to_version)
        steps = self.registry.migration_steps(self.graph, name, from_version, to_version)
        values = evolution.migrate_values(target_node.attributes, steps, _VALUES.validate_python(fill or {}))
        layers.ensure_conforms(self.graph, values, target.node, assigned=evolution.added_names(steps))
        layers.ensure_square_for_classification(self.graph, instance, target.node)

        current = self.graph.relationships_childed(instance, RelationshipKind.INSTANCE_OF)[0]
        self.graph.remove_child(current.id, instance)
        self.graph.create_relationship(
            RelationshipKind.INSTANCE_OF, target.node, [instance], relations.default_policy(RelationshipKind.INSTANCE_OF)
        )
        target_node.attributes = values
        target_node.version += 1
        self.channel.emit(instance, EventOperation.VERSION_BUMP, target_node.version)
        logger.info(f"Migrated {instance} from {name} v{from_version} to v{to_version}")
        return target.node
