"""
Semantics of the reified relationships.

Default propagation policies per kind, closure computation, anti-symmetry
enforcement, the copy/delete/move/version propagations and the event channel
that carries Dependency notifications (publisher-subscriber and mediator).
"""
import copy
import logging
from typing import Dict, List

import networkx as nx

from src.engine.errors import CycleRejected, LayerRuleViolation, NotAggregated, NotAMediator
from src.engine.models import (
    ChangeEvent,
    Delivery,
    EventOperation,
    PropagationFlag,
    PropagationPolicy,
    PropagationReport,
    RelationshipKind,
    ReportEntry,
    id_key,
)

logger = logging.getLogger(__name__)

DEFAULT_POLICIES = {
    RelationshipKind.AGGREGATION: PropagationPolicy(copy=True, delete=True, move=True),
    RelationshipKind.GENERALIZATION: PropagationPolicy(version=True),
    RelationshipKind.DESCRIBES: PropagationPolicy(),
    RelationshipKind.DEPENDENCY: PropagationPolicy(notify=True),
    RelationshipKind.INSTANCE_OF: PropagationPolicy(),
}

ANTISYMMETRIC_KINDS = (RelationshipKind.AGGREGATION, RelationshipKind.GENERALIZATION)


def default_policy(kind) -> PropagationPolicy:
    return DEFAULT_POLICIES[RelationshipKind(kind)]


def closure_levels(graph, start, kind, flag) -> List[List[str]]:
    """
    Breadth-first levels reached from start over links of one kind that enable a flag.

    Level 0 is [start]; each later level holds the nodes first seen at that hop
    distance, ascending by id.
    """
    graph.node(start)
    kind, flag = RelationshipKind(kind), PropagationFlag(flag)
    seen = {start}
    levels = [[start]]
    frontier = [start]
    while frontier:
        found = set()
        for node_id in frontier:
            for rel in graph.relationships_parented(node_id, kind):
                if not rel.policy.enables(flag):
                    continue
                found.update(child for child in rel.children if child not in seen)
        frontier = sorted(found, key=id_key)
        if frontier:
            seen.update(frontier)
            levels.append(frontier)
    return levels


def closure(graph, start, kind, flag) -> List[str]:
    """
    Affected set of an operation started at a node.

    Args:
        graph: The reified graph
        start: Node the operation is applied to
        kind: Relationship kind to traverse, parent to child
        flag: Propagation flag a link must enable to be traversed

    Returns:
        list: start first, then every reachable node once, by hop distance then id
    """
    return [node_id for level in closure_levels(graph, start, kind, flag) for node_id in level]


def check_antisymmetry(graph, kind, parent, children) -> bool:
    """True if linking parent to every child keeps the kind's edge set acyclic; False if an endpoint is missing."""
    kind = RelationshipKind(kind)
    if not all(graph.has_node(node_id) for node_id in [parent, *children]):
        return False
    if kind not in ANTISYMMETRIC_KINDS:
        return True
    if parent in children:
        return False
    view = graph.kind_view(kind)
    return not any(nx.has_path(view, child, parent) for child in children)


def ensure_antisymmetry(graph, kind, parent, children):
    graph.require_nodes([parent, *children])
    if not check_antisymmetry(graph, kind, parent, children):
        raise CycleRejected(
            f"{RelationshipKind(kind).value} link {parent} -> {list(children)} would make a node part of itself"
        )


class EventChannel:
    """
    Carries change events from publishers to subscribers along Dependency links.

    Delivery is synchronous: every subscriber in the notify-closure of the
    source gets the event appended to its inbox exactly once.
    """

    def __init__(self, graph):
        """Initialize the channel over a graph with empty inboxes."""
        self.graph = graph
        self.inboxes: Dict[str, List[ChangeEvent]] = {}
        self.sequence = 0

    def next_event(self, source, operation, detail) -> ChangeEvent:
        event = ChangeEvent(sequence=self.sequence + 1, source=source, operation=operation, detail=detail)
        self.sequence = event.sequence
        return event

    def subscribers(self, source) -> List[str]:
        return closure(self.graph, source, RelationshipKind.DEPENDENCY, PropagationFlag.NOTIFY)[1:]

    def publish_change(self, source, event, exclude=()) -> List[Delivery]:
        """
        Deliver an event to every subscriber reachable from its source.

        Args:
            source: Publishing node
            event: The change event to deliver
            exclude: Subscribers to skip (nodes about to be deleted)

        Returns:
            list: Deliveries in closure order
        """
        deliveries = []
        for subscriber in self.subscribers(source):
            if subscriber in exclude:
                continue
            self.inboxes.setdefault(subscriber, []).append(event)
            deliveries.append(Delivery(subscriber=subscriber, event=event))
        if deliveries:
            logger.debug(f"Event {event.sequence} from {source} delivered to {len(deliveries)} subscribers")
        return deliveries

    def emit(self, source, operation, detail, exclude=()) -> List[Delivery]:
        return self.publish_change(source, self.next_event(source, operation, detail), exclude)

    def mediate(self, mediator, message) -> List[Delivery]:
        """Broadcast a message from a mediator to its colleagues and, by relay, theirs."""
        self.graph.node(mediator)
        if not self.graph.relationships_parented(mediator, RelationshipKind.DEPENDENCY):
            raise NotAMediator(f"node '{mediator}' parents no Dependency relationship")
        return self.emit(mediator, EventOperation.MESSAGE, dict(message))

    def inbox(self, node_id) -> List[ChangeEvent]:
        self.graph.node(node_id)
        return list(self.inboxes.get(node_id, []))

    def drop(self, node_id):
        self.inboxes.pop(node_id, None)


def leaves_first(graph, members) -> List[str]:
    """Order nodes so every Aggregation part comes before its whole."""
    sub = nx.DiGraph()
    sub.add_nodes_from(members)
    view = graph.kind_view(RelationshipKind.AGGREGATION)
    sub.add_edges_from((u, v) for u, v in view.subgraph(members).edges())
    return list(reversed(list(nx.lexicographical_topological_sort(sub, key=id_key))))


def propagate_delete(graph, channel, start) -> PropagationReport:
    """
    Delete a node and every part its delete-enabled Aggregation links reach.

    Subscribers that survive receive one Deleted event per removed node before
    anything is removed. Removal runs leaves-first.
    """
    doomed = closure(graph, start, RelationshipKind.AGGREGATION, PropagationFlag.DELETE)
    doomed_set = set(doomed)
    order = leaves_first(graph, doomed)
    report = PropagationReport(operation="delete")
    for node_id in order:
        report.deliveries.extend(channel.emit(node_id, EventOperation.DELETED, node_id, exclude=doomed_set))
    removed = []
    for node_id in order:
        removed.extend(graph.remove_node(node_id))
        channel.drop(node_id)
        report.entries.append(ReportEntry(node=node_id, action="deleted"))
    report.removed_relationships = sorted(removed, key=id_key)
    logger.info(f"Deleted {len(order)} nodes and {len(removed)} relationships starting at {start}")
    return report


def propagate_copy(graph, start) -> PropagationReport:
    """
    Deep-copy the copy-enabled Aggregation closure of a node.

    Copies get fresh ids in closure order. Aggregation links inside the closure
    are replicated between the copies; every other link touching a copied node
    is replicated with the copy in that node's place and the original nodes at
    the other end.

    Raises:
        LayerRuleViolation: If the closure holds a type description (those evolve, not copy)
    """
    members = closure(graph, start, RelationshipKind.AGGREGATION, PropagationFlag.COPY)
    for node_id in members:
        if graph.node(node_id).description is not None:
            raise LayerRuleViolation(f"node '{node_id}' carries a type description and cannot be copied")
    member_set = set(members)
    touched = set()
    for node_id in members:
        touched.update(rel.id for rel in graph.relationships_parented(node_id))
        touched.update(rel.id for rel in graph.relationships_childed(node_id))
    touched = [graph.relationship(rel_id).model_copy(deep=True) for rel_id in sorted(touched, key=id_key)]

    report = PropagationReport(operation="copy")
    for node_id in members:
        original = graph.node(node_id)
        copied = graph.create_node(original.layer, original.level, None, copy.deepcopy(original.attributes))
        report.id_map[node_id] = copied
        report.entries.append(ReportEntry(node=node_id, action="copied", target=copied))

    id_map = report.id_map
    for rel in touched:
        if rel.kind == RelationshipKind.AGGREGATION:
            if rel.parent not in member_set:
                continue
            inner = [id_map[child] for child in rel.children if child in member_set]
            if inner:
                report.created_relationships.append(
                    graph.create_relationship(rel.kind, id_map[rel.parent], inner, rel.policy, rel.attributes)
                )
        elif rel.parent in member_set:
            report.created_relationships.append(
                graph.create_relationship(rel.kind, id_map[rel.parent], rel.children, rel.policy, rel.attributes)
            )
        else:
            for child in rel.children:
                if child in member_set:
                    report.created_relationships.append(
                        graph.create_relationship(rel.kind, rel.parent, [id_map[child]], rel.policy, rel.attributes)
                    )
    logger.info(f"Copied {len(members)} nodes starting at {start}")
    return report


def propagate_move(graph, start, new_parent) -> PropagationReport:
    """
    Re-attach a part to a new whole. Its own parts travel with it.

    Raises:
        NotAggregated: If the node is not part of any whole
        CycleRejected: If the new whole is the node itself or one of its parts
    """
    graph.require_nodes([start, new_parent])
    holders = graph.relationships_childed(start, RelationshipKind.AGGREGATION)
    if not holders:
        raise NotAggregated(f"node '{start}' is not part of any aggregation")
    if new_parent == start or nx.has_path(graph.kind_view(RelationshipKind.AGGREGATION), start, new_parent):
        raise CycleRejected(f"moving '{start}' under '{new_parent}' would make it part of itself")
    travelling = closure(graph, start, RelationshipKind.AGGREGATION, PropagationFlag.MOVE)

    report = PropagationReport(operation="move")
    for rel in holders:
        if graph.remove_child(rel.id, start):
            report.removed_relationships.append(rel.id)
    target = graph.relationships_parented(new_parent, RelationshipKind.AGGREGATION)
    if target:
        graph.add_child(target[0].id, start)
    else:
        report.created_relationships.append(
            graph.create_relationship(
                RelationshipKind.AGGREGATION, new_parent, [start], default_policy(RelationshipKind.AGGREGATION)
            )
        )
    report.entries.append(ReportEntry(node=start, action="reattached", target=new_parent))
    report.entries.extend(ReportEntry(node=node_id, action="moved") for node_id in travelling[1:])
    return report


def propagate_version(graph, channel, start) -> PropagationReport:
    """
    Bump the version of a node and of everything its version-enabled
    Generalization and Describes links reach. Each node is bumped once.
    """
    distance = {}
    for kind in (RelationshipKind.GENERALIZATION, RelationshipKind.DESCRIBES):
        for hops, level in enumerate(closure_levels(graph, start, kind, PropagationFlag.VERSION)):
            for node_id in level:
                distance[node_id] = min(distance.get(node_id, hops), hops)
    order = sorted(distance, key=lambda node_id: (distance[node_id], id_key(node_id)))

    report = PropagationReport(operation="version")
    for node_id in order:
        node = graph.node(node_id)
        node.version += 1
        report.entries.append(ReportEntry(node=node_id, action="version", target=str(node.version)))
    for node_id in order:
        report.deliveries.extend(channel.emit(node_id, EventOperation.VERSION_BUMP, graph.node(node_id).version))
    return report
