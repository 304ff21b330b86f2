"""
The two axes of the description-driven architecture.

Vertical: an Instance-layer node *is an instance of* a Model-layer node on the
same level. Horizontal: a Meta-level node *describes* a Base-level node on the
same layer. Where both axes meet, the four nodes must close into a square:
if PartType#1 describes Part#1212, then PartDescription (the model of
PartType#1) must describe Part (the model of Part#1212).
"""
import logging
from collections import Counter
from typing import List, Optional

import networkx as nx

from src.engine.errors import (
    AlreadyInstantiated,
    AmbiguousInheritance,
    EngineError,
    LayerRuleViolation,
    MalformedPayload,
    SchemaMismatch,
    SquareViolation,
    UnknownNode,
)
from src.engine.models import Layer, Level, RelationshipKind, ValueKind, id_key

logger = logging.getLogger(__name__)

BUILTIN_CONSTRUCTS = (
    "Class",
    "Attribute",
    "Association",
    "Operation",
    "Component",
    "Graph",
    "Node",
    "Relationship",
)


def builtin_constructs() -> List[str]:
    """The fixed M2 vocabulary: the UML core constructs plus the Graph meta-object."""
    return list(BUILTIN_CONSTRUCTS)


# ---------- classification ----------
def classifier_of(graph, node_id) -> Optional[str]:
    """The Model-layer node this node is an instance of, if any."""
    rels = graph.relationships_childed(node_id, RelationshipKind.INSTANCE_OF)
    return rels[0].parent if rels else None


def describes(graph, meta_id, base_id) -> bool:
    return any(base_id in rel.children for rel in graph.relationships_parented(meta_id, RelationshipKind.DESCRIBES))


def describers_of(graph, node_id) -> List[str]:
    return graph.neighbors(node_id, RelationshipKind.DESCRIBES, "ChildToParent")


def described_by_meta(graph, meta_id) -> List[str]:
    return graph.neighbors(meta_id, RelationshipKind.DESCRIBES, "ParentToChild")


# ---------- inheritance ----------
def direct_superclasses(graph, node_id) -> List[str]:
    """Generalization parents, ignoring the successor links between type versions."""
    supers = []
    for rel in graph.relationships_childed(node_id, RelationshipKind.GENERALIZATION):
        if not rel.is_successor and rel.parent not in supers:
            supers.append(rel.parent)
    return supers


def direct_subclasses(graph, node_id) -> List[str]:
    subs = []
    for rel in graph.relationships_parented(node_id, RelationshipKind.GENERALIZATION):
        if not rel.is_successor:
            subs.extend(child for child in rel.children if child not in subs)
    return subs


def _walk(graph, start, step) -> List[str]:
    graph.node(start)
    seen = {start}
    order = []
    frontier = [start]
    while frontier:
        found = {n for node_id in frontier for n in step(graph, node_id) if n not in seen}
        frontier = sorted(found, key=id_key)
        seen.update(frontier)
        order.extend(frontier)
    return order


def superclasses(graph, node_id) -> List[str]:
    return _walk(graph, node_id, direct_superclasses)


def subclasses(graph, node_id) -> List[str]:
    return _walk(graph, node_id, direct_subclasses)


def effective_schema(graph, node_id):
    """
    Attribute specs of a type including everything inherited over Generalization.

    Own specs shadow inherited ones of the same name. The same spec reached
    through several superclasses merges; the same name with different kinds
    is ambiguous.

    Raises:
        MalformedPayload: If the node carries no type description
        AmbiguousInheritance: If two superclasses disagree on a spec
    """
    if graph.node(node_id).description is None:
        raise MalformedPayload(f"node '{node_id}' carries no type description")
    return _resolve(graph, node_id)


def _resolve(graph, node_id):
    node = graph.node(node_id)
    own = list(node.description.attribute_specs) if node.description else []
    return compose_schema(graph, node_id, own, direct_superclasses(graph, node_id))


def compose_schema(graph, node_id, own, supers):
    """Own specs followed by whatever `supers` contribute, as if `node_id` had them as superclasses."""
    own_names = {spec.name for spec in own}
    inherited = {}
    origin = {}
    for sup in supers:
        for spec in _resolve(graph, sup):
            if spec.name in own_names:
                continue
            if spec.name in inherited:
                if inherited[spec.name] != spec:
                    raise AmbiguousInheritance(
                        f"'{node_id}' inherits '{spec.name}' as {inherited[spec.name].value_kind.value} "
                        f"from {origin[spec.name]} and as {spec.value_kind.value} from {sup}"
                    )
                continue
            inherited[spec.name] = spec
            origin[spec.name] = sup
    return own + list(inherited.values())


# ---------- conformance ----------
def value_matches(graph, value_kind, value) -> bool:
    value_kind = ValueKind(value_kind)
    if value_kind == ValueKind.FLAG:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if value_kind == ValueKind.INTEGER:
        return isinstance(value, int)
    if value_kind == ValueKind.DECIMAL:
        return isinstance(value, (int, float))
    if value_kind == ValueKind.TEXT:
        return isinstance(value, str)
    return isinstance(value, str) and (graph is None or graph.has_node(value))


def conformance_problems(graph, attributes, schema, assigned=None) -> List[str]:
    """
    Names whose values do not fit the schema.

    NodeRef targets are looked up in `graph` only for the names in `assigned`,
    or for every name when `assigned` is None.
    """
    specs = {spec.name: spec for spec in schema}
    problems = []
    for name in sorted(attributes):
        spec = specs.get(name)
        lookup = graph if assigned is None or name in assigned else None
        if spec is None:
            problems.append(f"'{name}' is not declared")
        elif not value_matches(lookup, spec.value_kind, attributes[name]):
            problems.append(f"'{name}'={attributes[name]!r} is not {spec.value_kind.value}")
    return problems


def ensure_conforms(graph, attributes, model_id, assigned=None):
    problems = conformance_problems(graph, attributes, effective_schema(graph, model_id), assigned)
    if problems:
        raise SchemaMismatch(f"values do not conform to '{model_id}': " + "; ".join(problems))


# ---------- axis rules ----------
def square_closed(graph, meta_model, base_model) -> bool:
    return describes(graph, meta_model, base_model)


def ensure_square_for_classification(graph, instance_id, model_id):
    """Classifying a node under a model must not open a square around its Describes links."""
    for meta in describers_of(graph, instance_id):
        meta_model = classifier_of(graph, meta)
        if meta_model and not square_closed(graph, meta_model, model_id):
            raise SquareViolation(
                f"'{meta}' describes '{instance_id}' but its model '{meta_model}' does not describe '{model_id}'"
            )
    for base in described_by_meta(graph, instance_id):
        base_model = classifier_of(graph, base)
        if base_model and not square_closed(graph, model_id, base_model):
            raise SquareViolation(
                f"'{instance_id}' describes '{base}' but '{model_id}' does not describe its model '{base_model}'"
            )


def check_instance_of(graph, instance_id, model_id):
    """
    Rules for an *is an instance of* link from instance up to model.

    Raises:
        LayerRuleViolation: If the link does not go Instance -> Model on one level
        AlreadyInstantiated: If the instance is already classified
        SchemaMismatch: If the instance's values do not conform to the model
        SquareViolation: If the classification opens a square
    """
    instance, model = graph.node(instance_id), graph.node(model_id)
    if instance.layer != Layer.INSTANCE or model.layer != Layer.MODEL:
        raise LayerRuleViolation(f"'{instance_id}' must be Instance-layer and '{model_id}' Model-layer")
    if instance.level != model.level:
        raise LayerRuleViolation(
            f"level mismatch: '{instance_id}' is {instance.level.value}, '{model_id}' is {model.level.value}"
        )
    if classifier_of(graph, instance_id) is not None:
        raise AlreadyInstantiated(f"'{instance_id}' is already an instance of '{classifier_of(graph, instance_id)}'")
    ensure_conforms(graph, instance.attributes, model_id)
    ensure_square_for_classification(graph, instance_id, model_id)


def check_described_by(graph, base_id, meta_id):
    """
    Rules for an *is described by* link from a base-level node to a meta-level node.

    Raises:
        LayerRuleViolation: If the link does not go Meta -> Base within one layer
        SquareViolation: If both ends are classified and their models are not linked
    """
    base, meta = graph.node(base_id), graph.node(meta_id)
    if base.level != Level.BASE or meta.level != Level.META:
        raise LayerRuleViolation(f"'{meta_id}' must be Meta-level and '{base_id}' Base-level")
    if base.layer != meta.layer:
        raise LayerRuleViolation(f"'{meta_id}' and '{base_id}' sit on different layers")
    base_model, meta_model = classifier_of(graph, base_id), classifier_of(graph, meta_id)
    if base_model and meta_model and not square_closed(graph, meta_model, base_model):
        raise SquareViolation(f"'{meta_model}' does not describe '{base_model}'")


def check_generalization(graph, parent, children):
    node = graph.node(parent)
    for child in children:
        if graph.node(child).coordinate != node.coordinate:
            raise LayerRuleViolation(f"'{parent}' and '{child}' are on different layers or levels")


# ---------- audit ----------
def audit(graph) -> List[str]:
    """Quadrant integrity, single classification, commuting square and conformance."""
    problems = []
    for kind in (RelationshipKind.AGGREGATION, RelationshipKind.GENERALIZATION):
        if not nx.is_directed_acyclic_graph(graph.kind_view(kind)):
            problems.append(f"{kind.value} links contain a cycle")
    # schemas cannot be resolved over a cyclic hierarchy
    resolvable = nx.is_directed_acyclic_graph(graph.kind_view(RelationshipKind.GENERALIZATION))
    for rel in graph.relationships.values():
        parent = graph.nodes.get(rel.parent)
        for child_id in rel.children:
            child = graph.nodes.get(child_id)
            if parent is None or child is None:
                continue
            if rel.kind == RelationshipKind.INSTANCE_OF and (
                parent.layer != Layer.MODEL or child.layer != Layer.INSTANCE or parent.level != child.level
            ):
                problems.append(f"{rel.id}: InstanceOf must cross layers within a level")
            if rel.kind == RelationshipKind.DESCRIBES and (
                parent.level != Level.META or child.level != Level.BASE or parent.layer != child.layer
            ):
                problems.append(f"{rel.id}: Describes must cross levels within a layer")
            if rel.kind == RelationshipKind.DESCRIBES:
                base_model, meta_model = classifier_of(graph, child_id), classifier_of(graph, rel.parent)
                if base_model and meta_model and not square_closed(graph, meta_model, base_model):
                    problems.append(f"{rel.id}: square {meta_model}/{base_model} not closed")
    for node_id in sorted(graph.nodes, key=id_key):
        classifiers = graph.relationships_childed(node_id, RelationshipKind.INSTANCE_OF)
        if len(classifiers) > 1:
            problems.append(f"{node_id}: classified more than once")
        if classifiers and resolvable:
            try:
                schema = effective_schema(graph, classifiers[0].parent)
            except EngineError as exc:
                problems.append(f"{node_id}: {exc}")
                continue
            # references are checked when assigned; their targets may be deleted later
            for issue in conformance_problems(None, graph.nodes[node_id].attributes, schema):
                problems.append(f"{node_id}: {issue}")
    return problems


# ---------- M2 census ----------
def construct_of(graph, object_id) -> str:
    """The M2 construct a stored node or relationship is an implicit instance of."""
    if object_id in graph.relationships:
        return "Relationship"
    node = graph.nodes.get(object_id)
    if node is None:
        raise UnknownNode(f"'{object_id}' is neither a node nor a relationship")
    return "Class" if node.description is not None else "Node"


def construct_census(graph):
    """Count stored objects per M2 construct."""
    census = Counter({name: 0 for name in BUILTIN_CONSTRUCTS})
    census["Graph"] = 1
    for node in graph.nodes.values():
        census[construct_of(graph, node.id)] += 1
        if node.description is not None:
            census["Attribute"] += len(node.description.attribute_specs)
            census["Operation"] += len(node.description.operation_specs)
    for rel in graph.relationships.values():
        census["Relationship"] += 1
        census["Association"] += len(rel.children)
    wholes = {rel.parent for rel in graph.relationships.values() if rel.kind == RelationshipKind.AGGREGATION}
    census["Component"] = len(wholes)
    return {name: census[name] for name in BUILTIN_CONSTRUCTS}
