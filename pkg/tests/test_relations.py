"""Closures, anti-symmetry, propagation and event delivery."""
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from src.engine.errors import (
    CycleRejected,
    LayerRuleViolation,
    MalformedPayload,
    NotAggregated,
    NotAMediator,
    UnknownNode,
)
from src.engine.meta_store import MetaObjectStore
from src.engine.models import EventOperation, Level, PropagationPolicy, RelationshipKind
from tests.builders import define, instance, instances
from tests.oracles import closure_oracle, edges_of, is_acyclic

AGG = RelationshipKind.AGGREGATION
GEN = RelationshipKind.GENERALIZATION
DEP = RelationshipKind.DEPENDENCY

PROPERTY_SETTINGS = settings(
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
GRID_SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
FLAGS = ["copy", "delete", "move", "version", "notify"]


@st.composite
def _flagged_dag(draw):
    """(node count, [(parent index, child index, flag)]) with parent < child, so always acyclic."""
    count = draw(st.integers(min_value=2, max_value=50))
    pairs = draw(
        st.lists(
            st.tuples(
                st.integers(0, count - 1), st.integers(0, count - 1), st.booleans()
            ).filter(lambda e: e[0] != e[1]),
            max_size=150,
        )
    )
    return count, [(min(a, b), max(a, b), flag) for a, b, flag in pairs]


@st.composite
def _flagged_bipartite(draw):
    """(parent count, child count, [(parent index, child index, flag)]) for links that cross an axis."""
    parents = draw(st.integers(min_value=1, max_value=6))
    children = draw(st.integers(min_value=1, max_value=12))
    edges = draw(
        st.lists(st.tuples(st.integers(0, parents - 1), st.integers(0, children - 1), st.booleans()), max_size=30)
    )
    return parents, children, edges


@st.composite
def _flagged_digraph(draw):
    """Dependency topologies: any direction, cycles allowed, no self links."""
    count = draw(st.integers(min_value=2, max_value=15))
    edges = draw(
        st.lists(
            st.tuples(st.integers(0, count - 1), st.integers(0, count - 1), st.booleans()).filter(
                lambda e: e[0] != e[1]
            ),
            max_size=40,
        )
    )
    return count, edges


def _build(store, count, edges, kind, flag):
    ids = instances(store, count)
    links = []
    for parent, child, enabled in edges:
        policy = {flag: enabled}
        store.create_relationship(kind, ids[parent], [ids[child]], policy=policy)
        links.append((ids[parent], [ids[child]], enabled))
    return ids, links


class TestClosure:
    def test_isolated_node(self, store):
        node = instance(store)
        assert store.closure(node, AGG, "delete") == [node]

    def test_three_level_tree_in_breadth_first_order(self, store):
        root, mid_a, mid_b, *leaves = instances(store, 7)
        store.create_relationship(AGG, root, [mid_b, mid_a])
        store.create_relationship(AGG, mid_b, [leaves[3], leaves[2]])
        store.create_relationship(AGG, mid_a, [leaves[1], leaves[0]])
        assert store.closure(root, AGG, "delete") == [root, mid_a, mid_b, *leaves]

    def test_disabled_link_stops_traversal(self, store):
        a, b, c = instances(store, 3)
        store.create_relationship(AGG, a, [b])
        store.create_relationship(AGG, b, [c], policy={"delete": False})
        assert store.closure(a, AGG, "delete") == [a, b]
        assert store.closure(a, AGG, "copy") == [a, b]

    @pytest.mark.parametrize("kind", [AGG, GEN, DEP])
    @pytest.mark.parametrize("flag", FLAGS)
    @GRID_SETTINGS
    @given(dag=_flagged_dag(), data=st.data())
    def test_matches_reachability_oracle(self, kind, flag, dag, data):
        store = MetaObjectStore()
        count, edges = dag
        ids, links = _build(store, count, edges, kind, flag)
        start = ids[data.draw(st.integers(0, count - 1))]
        assert store.closure(start, kind, flag) == closure_oracle(links, start)

    @pytest.mark.parametrize("kind", [RelationshipKind.DESCRIBES, RelationshipKind.INSTANCE_OF])
    @pytest.mark.parametrize("flag", FLAGS)
    @GRID_SETTINGS
    @given(layout=_flagged_bipartite(), data=st.data())
    def test_cross_axis_kinds_match_the_oracle(self, kind, flag, layout, data):
        store = MetaObjectStore()
        parent_count, child_count, edges = layout
        if kind == RelationshipKind.DESCRIBES:
            parents = [instance(store, level=Level.META) for _ in range(parent_count)]
        else:
            parents = [define(store, f"T{i}") for i in range(parent_count)]
            edges = list({child: (parent, child, enabled) for parent, child, enabled in edges}.values())
        children = instances(store, child_count)
        links = []
        for parent, child, enabled in edges:
            store.create_relationship(kind, parents[parent], [children[child]], policy={flag: enabled})
            links.append((parents[parent], [children[child]], enabled))
        start = data.draw(st.sampled_from(parents + children))
        assert store.closure(start, kind, flag) == closure_oracle(links, start)

    @PROPERTY_SETTINGS
    @given(dag=_flagged_dag(), data=st.data())
    def test_delete_removes_closure_without_dangling_references(self, dag, data):
        store = MetaObjectStore()
        count, edges = dag
        ids, links = _build(store, count, edges, AGG, "delete")
        start = ids[data.draw(st.integers(0, count - 1))]
        expected = set(closure_oracle(links, start))

        report = store.delete_node(start)

        assert set(report.nodes) == expected
        assert set(store.node_ids()) == set(ids) - expected
        assert store.audit() == []


class TestAntisymmetry:
    def test_reverse_link_rejected(self, store):
        a, b = instances(store, 2)
        store.create_relationship(AGG, a, [b])
        assert store.check_antisymmetry(AGG, b, [a]) is False
        with pytest.raises(CycleRejected):
            store.create_relationship(AGG, b, [a])

    def test_transitive_cycle_rejected(self, store):
        a, b, c = instances(store, 3)
        store.create_relationship(AGG, a, [b])
        store.create_relationship(AGG, b, [c])
        with pytest.raises(CycleRejected):
            store.create_relationship(AGG, c, [a])

    def test_diamond_is_fine(self, store):
        a, b, c, d = instances(store, 4)
        store.create_relationship(AGG, a, [b, c])
        assert store.check_antisymmetry(AGG, b, [d])
        store.create_relationship(AGG, b, [d])
        assert store.check_antisymmetry(AGG, c, [d])
        store.create_relationship(AGG, c, [d])

    def test_generalization_is_antisymmetric(self, store):
        a, b = instances(store, 2)
        store.create_relationship(GEN, a, [b])
        with pytest.raises(CycleRejected):
            store.create_relationship(GEN, b, [a])

    def test_dependency_may_cycle(self, store):
        a, b = instances(store, 2)
        store.create_relationship(DEP, a, [b])
        assert store.check_antisymmetry(DEP, b, [a])
        store.create_relationship(DEP, b, [a])

    def test_missing_endpoint_is_not_accepted(self, store):
        a = instance(store)
        assert store.check_antisymmetry(AGG, a, ["N999999"]) is False
        assert store.check_antisymmetry(DEP, "N999999", [a]) is False
        with pytest.raises(UnknownNode):
            store.create_relationship(AGG, a, ["N999999"])

    def test_one_bad_child_rejects_the_whole_link(self, store):
        a, b, c = instances(store, 3)
        store.create_relationship(AGG, a, [b])
        with pytest.raises(CycleRejected):
            store.create_relationship(AGG, b, [c, a])
        assert store.neighbors(b, AGG, "ParentToChild") == []

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(
        count=st.integers(min_value=2, max_value=12),
        attempts=st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), min_size=25, max_size=60),
    )
    def test_no_false_accepts_or_rejects(self, count, attempts):
        store = MetaObjectStore()
        ids = instances(store, count)
        accepted = []
        for parent_index, child_index in attempts:
            parent, child = ids[parent_index % count], ids[child_index % count]
            expected = is_acyclic(accepted + [(parent, child)])
            assert store.check_antisymmetry(AGG, parent, [child]) is expected
            if expected:
                store.create_relationship(AGG, parent, [child])
                accepted.append((parent, child))
            else:
                with pytest.raises(CycleRejected):
                    store.create_relationship(AGG, parent, [child])
        assert is_acyclic(edges_of(store, AGG))


class TestVersionPropagation:
    def test_superclass_bumps_transitive_subclasses_once(self, store):
        top, middle, bottom = instances(store, 3)
        store.create_relationship(GEN, top, [middle])
        store.create_relationship(GEN, middle, [bottom])
        report = store.propagate_version(top)
        assert report.nodes == [top, middle, bottom]
        assert [store.get_node(n).version for n in (top, middle, bottom)] == [2, 2, 2]

    def test_diamond_join_bumped_exactly_once(self, store):
        root, left, right, join = instances(store, 4)
        store.create_relationship(GEN, root, [left, right])
        store.create_relationship(GEN, left, [join])
        store.create_relationship(GEN, right, [join])
        store.propagate_version(root)
        assert [store.get_node(n).version for n in (root, left, right, join)] == [2, 2, 2, 2]

    def test_describes_does_not_propagate_by_default(self, store):
        meta = instance(store, level=Level.META)
        base = instance(store)
        rel_id = store.link_described_by(base, meta)
        store.propagate_version(meta)
        assert store.get_node(base).version == 1

        store.set_policy(rel_id, PropagationPolicy(version=True))
        store.propagate_version(meta)
        assert store.get_node(meta).version == 3
        assert store.get_node(base).version == 2

    def test_each_bump_is_published(self, store):
        top, sub, watcher = instances(store, 3)
        store.create_relationship(GEN, top, [sub])
        store.create_relationship(DEP, sub, [watcher])
        report = store.propagate_version(top)
        assert [d.subscriber for d in report.deliveries] == [watcher]
        (event,) = store.inbox(watcher)
        assert event.operation == EventOperation.VERSION_BUMP
        assert event.source == sub
        assert event.detail == 2

    @GRID_SETTINGS
    @given(
        dag=_flagged_dag(),
        subscriptions=st.lists(st.tuples(st.integers(0, 49), st.integers(0, 49), st.booleans()), max_size=40),
        data=st.data(),
    )
    def test_each_node_bumped_and_heard_once(self, dag, subscriptions, data):
        store = MetaObjectStore()
        count, edges = dag
        ids, links = _build(store, count, edges, GEN, "version")
        notify_links = []
        for parent, child, enabled in subscriptions:
            parent, child = ids[parent % count], ids[child % count]
            if parent != child:
                store.create_relationship(DEP, parent, [child], policy={"notify": enabled})
                notify_links.append((parent, [child], enabled))
        first = ids[data.draw(st.integers(0, count - 1))]
        bumped = closure_oracle(links, first)
        audience = {source: closure_oracle(notify_links, source)[1:] for source in bumped}

        assert store.propagate_version(first).nodes == bumped
        for node_id in ids:
            heard = [event.source for event in store.inbox(node_id)]
            assert set(heard) <= set(bumped)
            for source in bumped:
                assert heard.count(source) == (1 if node_id in audience[source] else 0)

        second = ids[data.draw(st.integers(0, count - 1))]
        again = closure_oracle(links, second)
        store.propagate_version(second)
        for node_id in ids:
            assert store.get_node(node_id).version == 1 + (node_id in bumped) + (node_id in again)


class TestCopy:
    def test_tree_copy_is_isomorphic(self, store):
        root, mid_a, mid_b, *leaves = instances(store, 7)
        store.create_relationship(AGG, root, [mid_a, mid_b])
        store.create_relationship(AGG, mid_a, leaves[:2])
        store.create_relationship(AGG, mid_b, leaves[2:])

        report = store.propagate_copy(root)

        assert len(store.node_ids()) == 14
        id_map = report.id_map
        assert list(id_map) == [root, mid_a, mid_b, *leaves]
        assert set(id_map.values()).isdisjoint([root, mid_a, mid_b, *leaves])
        for original in [root, mid_a, mid_b]:
            copied_children = store.neighbors(id_map[original], AGG, "ParentToChild")
            assert copied_children == [id_map[c] for c in store.neighbors(original, AGG, "ParentToChild")]

    def test_copy_keeps_values_and_starts_at_version_1(self, store):
        part = instance(store, serial="A")
        store.propagate_version(part)
        copied = store.propagate_copy(part).id_map[part]
        node = store.get_node(copied)
        assert node.attributes == {"serial": "A"}
        assert node.version == 1

    def test_links_outside_closure_point_at_originals(self, store):
        publisher, part = instances(store, 2)
        store.create_relationship(DEP, publisher, [part])
        copied = store.propagate_copy(part).id_map[part]
        assert store.neighbors(publisher, DEP, "ParentToChild") == [part, copied]

    def test_description_in_closure_rejected(self, store):
        holder = instance(store)
        part_type = define(store, "Part")
        store.create_relationship(AGG, holder, [part_type])
        with pytest.raises(LayerRuleViolation):
            store.propagate_copy(holder)
        assert len(store.node_ids()) == 2

    @GRID_SETTINGS
    @given(dag=_flagged_dag(), data=st.data())
    def test_copy_is_isomorphic_over_the_id_map(self, dag, data):
        store = MetaObjectStore()
        count, edges = dag
        ids, links = _build(store, count, edges, AGG, "copy")
        start = ids[data.draw(st.integers(0, count - 1))]
        members = closure_oracle(links, start)
        before = sorted(edges_of(store, AGG))

        id_map = store.propagate_copy(start).id_map

        assert list(id_map) == members
        copies = set(id_map.values())
        assert len(copies) == len(members)
        assert copies.isdisjoint(ids)
        after = edges_of(store, AGG)
        assert sorted(e for e in after if e[0] in copies) == sorted(
            (id_map[parent], id_map[child]) for parent, child in before if parent in id_map and child in id_map
        )
        assert sorted(e for e in after if e[0] not in copies) == before
        assert store.audit() == []


class TestMove:
    def test_reattaches_with_parts(self, store):
        old, new, part, screw = instances(store, 4)
        store.create_relationship(AGG, old, [part])
        store.create_relationship(AGG, part, [screw])
        report = store.propagate_move(part, new)
        assert [(e.node, e.action) for e in report.entries] == [(part, "reattached"), (screw, "moved")]
        assert store.neighbors(part, AGG, "ChildToParent") == [new]
        assert store.neighbors(screw, AGG, "ChildToParent") == [part]

    def test_joins_existing_aggregation_of_new_whole(self, store):
        old, new, part, other = instances(store, 4)
        store.create_relationship(AGG, old, [part])
        rel_id = store.create_relationship(AGG, new, [other])
        store.propagate_move(part, new)
        assert store.get_relationship(rel_id).children == [other, part]

    def test_into_own_part_rejected(self, store):
        old, part, screw = instances(store, 3)
        store.create_relationship(AGG, old, [part])
        store.create_relationship(AGG, part, [screw])
        with pytest.raises(CycleRejected):
            store.propagate_move(part, screw)
        with pytest.raises(CycleRejected):
            store.propagate_move(part, part)

    def test_unaggregated_node_rejected(self, store):
        a, b = instances(store, 2)
        with pytest.raises(NotAggregated):
            store.propagate_move(a, b)


class TestDeleteEvents:
    def test_surviving_subscriber_hears_every_deletion(self, store):
        root, part, watcher = instances(store, 3)
        store.create_relationship(AGG, root, [part])
        store.create_relationship(DEP, part, [watcher])
        store.create_relationship(DEP, root, [watcher])
        store.propagate_delete(root)
        events = store.inbox(watcher)
        assert [e.operation for e in events] == [EventOperation.DELETED, EventOperation.DELETED]
        assert [e.detail for e in events] == [part, root]

    def test_doomed_subscriber_hears_nothing(self, store):
        root, part = instances(store, 2)
        store.create_relationship(AGG, root, [part])
        store.create_relationship(DEP, root, [part])
        report = store.propagate_delete(root)
        assert report.deliveries == []


class TestEvents:
    def test_two_subscribers_share_one_event(self, store):
        publisher, s1, s2 = instances(store, 3)
        store.create_relationship(DEP, publisher, [s1, s2])
        deliveries = store.set_attribute(publisher, "state", "ready")
        assert [d.subscriber for d in deliveries] == [s1, s2]
        (first,), (second,) = store.inbox(s1), store.inbox(s2)
        assert first.sequence == second.sequence
        assert first.operation == EventOperation.ATTRIBUTE_SET
        assert first.detail == "state"

    def test_no_subscribers(self, store):
        node = instance(store)
        assert store.set_attribute(node, "state", "ready") == []

    def test_chain_relays_original_source(self, store):
        p, s1, s2 = instances(store, 3)
        store.create_relationship(DEP, p, [s1])
        store.create_relationship(DEP, s1, [s2])
        store.set_attribute(p, "state", 1)
        (event,) = store.inbox(s2)
        assert event.source == p

    def test_notify_off_cuts_relay(self, store):
        p, s1, s2 = instances(store, 3)
        store.create_relationship(DEP, p, [s1])
        store.create_relationship(DEP, s1, [s2], policy={"notify": False})
        store.set_attribute(p, "state", 1)
        assert len(store.inbox(s1)) == 1
        assert store.inbox(s2) == []

    def test_explicit_publish_is_stamped(self, store):
        p, s = instances(store, 2)
        store.create_relationship(DEP, p, [s])
        store.set_attribute(p, "state", 1)
        (delivery,) = store.publish_change(p, {"operation": "Message", "detail": "hello"})
        assert delivery.event.sequence == 2
        assert delivery.event.source == p

    def test_invalid_event_leaves_sequence_alone(self, store):
        p, s = instances(store, 2)
        store.create_relationship(DEP, p, [s])
        with pytest.raises(MalformedPayload):
            store.publish_change(p, {"operation": "Message", "detail": [1, 2]})
        assert store.channel.sequence == 0

    @settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(topology=_flagged_digraph(), data=st.data())
    def test_exactly_once_delivery_in_closure_order(self, topology, data):
        store = MetaObjectStore()
        count, edges = topology
        ids, links = _build(store, count, edges, DEP, "notify")
        source = ids[data.draw(st.integers(0, count - 1))]
        expected = closure_oracle(links, source)[1:]

        deliveries = store.set_attribute(source, "state", "changed")

        assert [d.subscriber for d in deliveries] == expected
        for node_id in ids:
            assert len(store.inbox(node_id)) == (1 if node_id in expected else 0)


class TestMediator:
    def test_colleagues_receive_message(self, store):
        mediator, x, y, z = instances(store, 4)
        store.create_relationship(DEP, mediator, [x, y, z])
        deliveries = store.mediate(mediator, {"cmd": "stop"})
        assert [d.subscriber for d in deliveries] == [x, y, z]
        assert deliveries[0].event.detail == {"cmd": "stop"}

    def test_single_colleague(self, store):
        mediator, x = instances(store, 2)
        store.create_relationship(DEP, mediator, [x])
        assert len(store.mediate(mediator, {})) == 1

    def test_nested_mediators_relay(self, store):
        mediator, inner, x, y = instances(store, 4)
        store.create_relationship(DEP, mediator, [inner])
        store.create_relationship(DEP, inner, [x, y])
        assert [d.subscriber for d in store.mediate(mediator, {"cmd": "go"})] == [inner, x, y]

    def test_node_without_colleagues(self, store):
        with pytest.raises(NotAMediator):
            store.mediate(instance(store), {"cmd": "go"})
