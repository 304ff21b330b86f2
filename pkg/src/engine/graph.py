"""
The reified Graph: nodes, relationship objects and the structural rules between them.

A relationship has exactly one parent and at least one child, and it lives only
as long as its parent does. Kind-specific rules (acyclicity, layer placement) are
not checked here; callers in `relations` and `layers` run them first.
"""
import logging
from typing import Dict, List, Optional

import networkx as nx

from src.engine.errors import (
    CycleRejected,
    EmptyChildren,
    MalformedPayload,
    UnknownNode,
    UnknownRelationship,
)
from src.engine.models import (
    NODE_PREFIX,
    RELATIONSHIP_PREFIX,
    Direction,
    Layer,
    Level,
    Node,
    PropagationPolicy,
    ReifiedRelationship,
    RelationshipKind,
    TypeDescription,
    format_id,
    id_key,
)

logger = logging.getLogger(__name__)


def check_payload(layer, level, description, attributes):
    """
    Validate a node payload against its layer/level coordinate.

    Raises:
        MalformedPayload: If the payload does not fit the coordinate
    """
    if layer == Layer.MODEL:
        if description is None:
            raise MalformedPayload("a Model-layer node must carry a TypeDescription")
        if attributes:
            raise MalformedPayload("a Model-layer node carries a description, not attribute values")
    elif level == Level.BASE and description is not None:
        raise MalformedPayload("an Instance/Base node carries attribute values only")


class ReifiedGraph:
    """
    Store of nodes and reified relationships.

    Keeps two ordered indexes (relationships parented at a node, relationships
    listing a node as child) plus a networkx mirror of every parent->child edge
    keyed by relationship id, used for path and cycle queries.
    """

    def __init__(self):
        """Initialize an empty graph."""
        self.nodes: Dict[str, Node] = {}
        self.relationships: Dict[str, ReifiedRelationship] = {}
        self.node_counter = 0
        self.relationship_counter = 0
        self._parented: Dict[str, set] = {}
        self._childed: Dict[str, set] = {}
        self.edges = nx.MultiDiGraph()

    # ---------- lookups ----------
    def node(self, node_id) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"node '{node_id}' does not exist") from None

    def relationship(self, rel_id) -> ReifiedRelationship:
        try:
            return self.relationships[rel_id]
        except KeyError:
            raise UnknownRelationship(f"relationship '{rel_id}' does not exist") from None

    def require_nodes(self, node_ids):
        for node_id in node_ids:
            self.node(node_id)

    def has_node(self, node_id):
        return node_id in self.nodes

    def relationships_parented(self, node_id, kind=None) -> List[ReifiedRelationship]:
        """Relationships whose parent is the node, ascending id."""
        rel_ids = sorted(self._parented.get(node_id, ()), key=id_key)
        rels = [self.relationships[r] for r in rel_ids]
        return [r for r in rels if kind is None or r.kind == kind]

    def relationships_childed(self, node_id, kind=None) -> List[ReifiedRelationship]:
        """Relationships listing the node as a child, ascending id."""
        rel_ids = sorted(self._childed.get(node_id, ()), key=id_key)
        rels = [self.relationships[r] for r in rel_ids]
        return [r for r in rels if kind is None or r.kind == kind]

    def neighbors(self, node_id, kind, direction) -> List[str]:
        """
        Nodes one hop away over relationships of one kind.

        Args:
            node_id: Starting node
            kind: Relationship kind to follow
            direction: ParentToChild lists children, ChildToParent lists parents

        Returns:
            list: Node ids ordered by relationship id, then child position
        """
        self.node(node_id)
        kind = RelationshipKind(kind)
        result = []
        if Direction(direction) == Direction.PARENT_TO_CHILD:
            for rel in self.relationships_parented(node_id, kind):
                result.extend(c for c in rel.children if c not in result)
        else:
            for rel in self.relationships_childed(node_id, kind):
                if rel.parent not in result:
                    result.append(rel.parent)
        return result

    def kind_view(self, kind):
        """Read-only view of the edge mirror restricted to one relationship kind."""
        kind = RelationshipKind(kind)
        edges = self.edges
        return nx.subgraph_view(
            edges, filter_edge=lambda u, v, key: edges.edges[u, v, key]["kind"] == kind
        )

    # ---------- mutations ----------
    def create_node(self, layer, level, description: Optional[TypeDescription] = None, attributes=None) -> str:
        """
        Create a node at version 1 with the next deterministic id.

        Raises:
            MalformedPayload: If the payload does not match the layer/level rules
        """
        layer, level = Layer(layer), Level(level)
        attributes = dict(attributes or {})
        check_payload(layer, level, description, attributes)
        self.node_counter += 1
        node_id = format_id(NODE_PREFIX, self.node_counter)
        self.nodes[node_id] = Node(
            id=node_id, layer=layer, level=level, attributes=attributes, description=description
        )
        self.edges.add_node(node_id)
        logger.debug(f"Created node {node_id} at ({layer.value}, {level.value})")
        return node_id

    def create_relationship(self, kind, parent, children, policy: PropagationPolicy, attributes=None) -> str:
        """
        Create a relationship object after the generic structural checks.

        Children are deduplicated keeping first occurrence.

        Raises:
            UnknownNode: If the parent or a child does not exist
            EmptyChildren: If no child is given
            CycleRejected: If the parent is listed among its own children
        """
        kind = RelationshipKind(kind)
        children = self.normalize_children(parent, children)
        self.relationship_counter += 1
        rel_id = format_id(RELATIONSHIP_PREFIX, self.relationship_counter)
        rel = ReifiedRelationship(
            id=rel_id,
            kind=kind,
            parent=parent,
            children=children,
            policy=policy,
            attributes=dict(attributes or {}),
        )
        self._attach(rel)
        logger.debug(f"Created {kind.value} relationship {rel_id}: {parent} -> {children}")
        return rel_id

    def normalize_children(self, parent, children):
        self.node(parent)
        ordered = []
        for child in children:
            self.node(child)
            if child not in ordered:
                ordered.append(child)
        if not ordered:
            raise EmptyChildren("a relationship needs at least one child")
        if parent in ordered:
            raise CycleRejected(f"node '{parent}' cannot be linked to itself")
        return ordered

    def add_child(self, rel_id, child):
        rel = self.relationship(rel_id)
        if child in rel.children:
            return
        rel.children.append(child)
        self._childed.setdefault(child, set()).add(rel_id)
        self.edges.add_edge(rel.parent, child, key=rel_id, kind=rel.kind)

    def remove_child(self, rel_id, child) -> bool:
        """
        Drop a child from a relationship.

        Returns:
            bool: True if the relationship lost its last child and was removed
        """
        rel = self.relationship(rel_id)
        if child not in rel.children:
            return False
        if len(rel.children) == 1:
            self.remove_relationship(rel_id)
            return True
        rel.children.remove(child)
        self._childed[child].discard(rel_id)
        self.edges.remove_edge(rel.parent, child, key=rel_id)
        return False

    def remove_relationship(self, rel_id):
        rel = self.relationships.pop(rel_id)
        self._parented[rel.parent].discard(rel_id)
        for child in rel.children:
            self._childed[child].discard(rel_id)
            self.edges.remove_edge(rel.parent, child, key=rel_id)

    def remove_node(self, node_id) -> List[str]:
        """
        Remove one node with lifecycle coupling: relationships it parents go with it,
        and it leaves the child sets of the others (emptied relationships are removed).

        Returns:
            list: Ids of the relationships removed, ascending
        """
        self.node(node_id)
        removed = [rel.id for rel in self.relationships_parented(node_id)]
        for rel_id in removed:
            self.remove_relationship(rel_id)
        for rel in self.relationships_childed(node_id):
            if self.remove_child(rel.id, node_id):
                removed.append(rel.id)
        del self.nodes[node_id]
        self._parented.pop(node_id, None)
        self._childed.pop(node_id, None)
        self.edges.remove_node(node_id)
        return sorted(removed, key=id_key)

    def _attach(self, rel):
        self.relationships[rel.id] = rel
        self._parented.setdefault(rel.parent, set()).add(rel.id)
        for child in rel.children:
            self._childed.setdefault(child, set()).add(rel.id)
            self.edges.add_edge(rel.parent, child, key=rel.id, kind=rel.kind)

    # ---------- restore ----------
    def restore(self, nodes, relationships, node_counter, relationship_counter):
        """Rebuild the graph and its indexes from persisted records."""
        self.__init__()
        for node in nodes:
            self.nodes[node.id] = node
            self.edges.add_node(node.id)
        for rel in relationships:
            self._attach(rel)
        self.node_counter = node_counter
        self.relationship_counter = relationship_counter

    # ---------- audit ----------
    def audit(self) -> List[str]:
        """Cardinality and dangling-reference checks over every relationship."""
        problems = []
        for rel in self.relationships.values():
            if not rel.children:
                problems.append(f"{rel.id}: empty child set")
            if len(set(rel.children)) != len(rel.children):
                problems.append(f"{rel.id}: duplicate children")
            if rel.parent in rel.children:
                problems.append(f"{rel.id}: self link")
            for ref in [rel.parent, *rel.children]:
                if ref not in self.nodes:
                    problems.append(f"{rel.id}: dangling reference to {ref}")
        return problems
