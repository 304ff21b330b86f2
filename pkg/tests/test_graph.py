import pytest

from src.engine.errors import (
    CycleRejected,
    DuplicateType,
    EmptyChildren,
    MalformedPayload,
    UnknownNode,
    UnknownRelationship,
)
from src.engine.models import Level, PropagationPolicy, RelationshipKind
from tests.builders import define, instance, instances, spec

AGG = RelationshipKind.AGGREGATION
DEP = RelationshipKind.DEPENDENCY


class TestCreateNode:
    def test_first_type_gets_first_id(self, store):
        assert define(store, "Part") == "N000001"

    def test_empty_instance_starts_at_version_1(self, store):
        node = store.get_node(instance(store))
        assert node.version == 1
        assert node.attributes == {}

    def test_successive_ids_differ(self, store):
        assert instance(store) != instance(store)

    def test_model_node_needs_a_description(self, store):
        with pytest.raises(MalformedPayload):
            store.create_node("Model", "Base")

    def test_model_node_carries_no_values(self, store):
        with pytest.raises(MalformedPayload):
            store.create_node("Model", "Base", description={"name": "Part"}, attributes={"mass": 1.0})

    def test_base_instance_carries_no_description(self, store):
        with pytest.raises(MalformedPayload):
            store.create_node("Instance", "Base", description={"name": "Part"})

    def test_meta_instance_may_carry_both(self, store):
        node_id = store.create_node("Instance", "Meta", description={"name": "PartType"}, attributes={"code": "PT-1"})
        node = store.get_node(node_id)
        assert node.description.name == "PartType"
        assert node.attributes == {"code": "PT-1"}

    def test_new_type_starts_at_version_1(self, store):
        with pytest.raises(MalformedPayload):
            store.create_node("Model", "Base", description={"name": "Part", "version": 2})

    def test_unknown_layer(self, store):
        with pytest.raises(MalformedPayload):
            store.create_node("Nowhere", "Base")

    def test_values_keep_their_kind(self, store):
        node = store.get_node(instance(store, calibrated=True, batch=3, mass=1.5, serial="x"))
        assert node.attributes["calibrated"] is True
        assert type(node.attributes["batch"]) is int
        assert type(node.attributes["mass"]) is float

    def test_unsupported_value_rejected(self, store):
        with pytest.raises(MalformedPayload):
            store.create_node("Instance", "Base", attributes={"parts": [1, 2]})

    def test_duplicate_spec_names_rejected(self, store):
        with pytest.raises(MalformedPayload):
            define(store, "Part", spec("mass", "Decimal"), spec("mass", "Text"))

    def test_type_names_are_unique(self, store):
        define(store, "Part")
        with pytest.raises(DuplicateType):
            define(store, "Part", level=Level.META)

    def test_meta_descriptions_are_unique_per_version(self, store):
        store.create_node("Instance", "Meta", description={"name": "PartType"})
        with pytest.raises(DuplicateType):
            store.create_node("Instance", "Meta", description={"name": "PartType"})

    def test_rejected_command_allocates_nothing(self, store):
        with pytest.raises(MalformedPayload):
            store.create_node("Model", "Base")
        assert instance(store) == "N000001"
        assert store.command_sequence == 1


class TestCreateRelationship:
    def test_aggregation_links_children_in_order(self, store):
        tracker, module_a, module_b = instances(store, 3)
        rel_id = store.create_relationship(AGG, tracker, [module_a, module_b])
        assert rel_id == "R000001"
        assert store.neighbors(tracker, AGG, "ParentToChild") == [module_a, module_b]

    def test_self_aggregation_rejected(self, store):
        node = instance(store)
        with pytest.raises(CycleRejected):
            store.create_relationship(AGG, node, [node])

    def test_self_dependency_rejected(self, store):
        node = instance(store)
        with pytest.raises(CycleRejected):
            store.create_relationship(DEP, node, [node])

    def test_duplicate_children_collapse(self, store):
        parent, a, b = instances(store, 3)
        rel_id = store.create_relationship(DEP, parent, [a, b, a])
        assert store.get_relationship(rel_id).children == [a, b]

    def test_empty_children_rejected(self, store):
        parent = instance(store)
        with pytest.raises(EmptyChildren):
            store.create_relationship(AGG, parent, [])

    def test_unknown_child_rejected(self, store):
        parent = instance(store)
        with pytest.raises(UnknownNode):
            store.create_relationship(AGG, parent, ["N000099"])

    def test_default_policy_follows_kind(self, store):
        parent, child = instances(store, 2)
        policy = store.get_relationship(store.create_relationship(AGG, parent, [child])).policy
        assert policy == PropagationPolicy(copy=True, delete=True, move=True)

    def test_explicit_policy_kept(self, store):
        parent, child = instances(store, 2)
        rel_id = store.create_relationship(DEP, parent, [child], policy={"notify": False})
        assert store.get_relationship(rel_id).policy == PropagationPolicy()

    def test_successor_attribute_is_reserved(self, store):
        parent, child = instances(store, 2)
        with pytest.raises(MalformedPayload):
            store.create_relationship(DEP, parent, [child], attributes={"successor": True})


class TestDeleteNode:
    def test_leaf_without_links(self, store):
        node = instance(store)
        report = store.delete_node(node)
        assert report.nodes == [node]
        assert report.relationships == []
        assert store.node_ids() == []

    def test_aggregation_tree_goes_together(self, store):
        root, a, b = instances(store, 3)
        rel_id = store.create_relationship(AGG, root, [a, b])
        report = store.delete_node(root)
        assert sorted(report.nodes) == [root, a, b]
        assert report.nodes[-1] == root
        assert report.relationships == [rel_id]
        assert store.relationship_ids() == []

    def test_child_removal_keeps_link_until_last_child(self, store):
        publisher, a, b = instances(store, 3)
        rel_id = store.create_relationship(DEP, publisher, [a, b])
        assert store.delete_node(a).relationships == []
        assert store.get_relationship(rel_id).children == [b]
        assert store.delete_node(b).relationships == [rel_id]
        with pytest.raises(UnknownRelationship):
            store.get_relationship(rel_id)

    def test_parented_links_die_with_parent(self, store):
        publisher, subscriber = instances(store, 2)
        store.create_relationship(DEP, publisher, [subscriber])
        store.delete_node(publisher)
        assert store.node_ids() == [subscriber]
        assert store.relationship_ids() == []

    def test_unknown_node(self, store):
        with pytest.raises(UnknownNode):
            store.delete_node("N000001")


class TestRelationshipObjects:
    def test_attribute_round_trips(self, store):
        parent, child = instances(store, 2)
        rel_id = store.create_relationship(AGG, parent, [child])
        store.set_relationship_attribute(rel_id, "quantity", 4)
        assert store.get_relationship(rel_id).attributes == {"quantity": 4}

    def test_successor_cannot_be_set(self, store):
        parent, child = instances(store, 2)
        rel_id = store.create_relationship(AGG, parent, [child])
        with pytest.raises(MalformedPayload):
            store.set_relationship_attribute(rel_id, "successor", True)

    def test_policy_can_be_overridden(self, store):
        meta = instance(store, level=Level.META)
        base = instance(store)
        rel_id = store.link_described_by(base, meta)
        assert store.get_relationship(rel_id).policy.version is False
        store.set_policy(rel_id, PropagationPolicy(version=True))
        assert store.get_relationship(rel_id).policy.version is True

    def test_returned_objects_are_copies(self, store):
        parent, child = instances(store, 2)
        rel_id = store.create_relationship(AGG, parent, [child])
        store.get_relationship(rel_id).children.append(parent)
        store.get_node(child).attributes["x"] = 1
        assert store.get_relationship(rel_id).children == [child]
        assert store.get_node(child).attributes == {}


class TestNeighbors:
    def test_isolated_node(self, store):
        assert store.neighbors(instance(store), AGG, "ParentToChild") == []

    def test_diamond_parents_by_relationship_id(self, store):
        a, b, c, d = instances(store, 4)
        store.create_relationship(AGG, a, [b, c])
        store.create_relationship(AGG, c, [d])
        store.create_relationship(AGG, b, [d])
        assert store.neighbors(d, AGG, "ChildToParent") == [c, b]
        assert store.neighbors(a, AGG, "ParentToChild") == [b, c]

    def test_other_kinds_ignored(self, store):
        a, b = instances(store, 2)
        store.create_relationship(DEP, a, [b])
        assert store.neighbors(a, AGG, "ParentToChild") == []
        assert store.neighbors(b, DEP, "ChildToParent") == [a]


def test_audit_clean_after_structural_edits(store):
    root, a, b, c = instances(store, 4)
    store.create_relationship(AGG, root, [a, b])
    store.create_relationship(DEP, a, [c])
    store.delete_node(b)
    assert store.audit() == []
