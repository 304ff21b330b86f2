"""
Versioned type descriptions.

A type evolves only through deltas. Each evolution adds a new Model-layer node
to the type's chain; earlier version nodes and their instances stay exactly as
they were, so parts built against different model versions coexist. Moving an
instance to another version is always an explicit migration.
"""
import logging
from typing import Dict, List, Set

from src.engine.errors import DuplicateType, InvalidDelta, MissingFill, UnknownType, UnknownVersion
from src.engine.models import (
    AttributeSpec,
    EvolutionDelta,
    HistoryEntry,
    Layer,
    RelationshipKind,
    TypeDescription,
    TypeVersionChain,
    VersionEntry,
    id_key,
)

logger = logging.getLogger(__name__)


def validate_delta(description, delta):
    """
    Check a delta against the description it would evolve.

    Raises:
        InvalidDelta: If a name is listed twice, a removed or renamed spec does
            not exist, or an added or renamed-to name already exists
    """
    added = [spec.name for spec in delta.added_specs]
    removed = list(delta.removed_spec_names)
    renamed_from = [old for old, _ in delta.renamed]
    renamed_to = [new for _, new in delta.renamed]
    listed = added + removed + renamed_from + renamed_to
    duplicates = sorted({name for name in listed if listed.count(name) > 1})
    if duplicates:
        raise InvalidDelta(f"names listed more than once: {', '.join(duplicates)}")

    own = [spec.name for spec in description.attribute_specs]
    for name in removed + renamed_from:
        if name not in own:
            raise InvalidDelta(f"'{name}' is not an attribute of {description.name} v{description.version}")
    kept = set(own) - set(removed) - set(renamed_from)
    for name in renamed_to + added:
        if name in kept:
            raise InvalidDelta(f"'{name}' already exists in {description.name} v{description.version}")


def apply_delta(description, delta) -> TypeDescription:
    """Removals first, then renames in place, then additions at the end."""
    rename = dict(delta.renamed)
    removed = set(delta.removed_spec_names)
    specs = [
        AttributeSpec(name=rename.get(spec.name, spec.name), value_kind=spec.value_kind)
        for spec in description.attribute_specs
        if spec.name not in removed
    ]
    specs.extend(delta.added_specs)
    return TypeDescription(
        name=description.name,
        attribute_specs=specs,
        operation_specs=list(description.operation_specs),
        version=description.version + 1,
    )


def invert_delta(delta, before) -> EvolutionDelta:
    """The delta that takes a version back to `before`, the description the delta was applied to."""
    return EvolutionDelta(
        added_specs=[spec for spec in before.attribute_specs if spec.name in delta.removed_spec_names],
        removed_spec_names=[spec.name for spec in delta.added_specs],
        renamed=[(new, old) for old, new in delta.renamed],
    )


def migrate_values(attributes, steps, fill) -> Dict:
    """
    Carry attribute values through a sequence of deltas.

    Renamed values follow their spec, removed values are dropped, and every
    added spec takes its value from `fill`, looked up by the name it is added
    under or by its final name.

    Raises:
        MissingFill: If an added spec has no fill value
    """
    fill = dict(fill or {})
    values = dict(attributes)
    pending = set()
    for step in steps:
        for name in step.removed_spec_names:
            values.pop(name, None)
            pending.discard(name)
        rename = dict(step.renamed)
        values = {rename.get(name, name): value for name, value in values.items()}
        pending = {rename.get(name, name) for name in pending}
        for spec in step.added_specs:
            if spec.name in fill:
                values[spec.name] = fill[spec.name]
            else:
                pending.add(spec.name)
    missing = sorted(name for name in pending if name not in fill)
    if missing:
        raise MissingFill(f"no fill value for added attributes: {', '.join(missing)}")
    for name in pending:
        values[name] = fill[name]
    return values


def added_names(steps) -> Set[str]:
    """Final names of the specs the steps add, the ones `migrate_values` fills in."""
    names = set()
    for step in steps:
        names -= set(step.removed_spec_names)
        rename = dict(step.renamed)
        names = {rename.get(name, name) for name in names}
        names.update(spec.name for spec in step.added_specs)
    return names


class EvolutionRegistry:
    """
    Version chains of every Model-layer type, keyed by type name.

    Each chain entry records the node holding that version, the delta that
    produced it and the store command sequence that created it.
    """

    def __init__(self):
        """Initialize with no chains."""
        self.chains: Dict[str, TypeVersionChain] = {}
        self._located: Dict[str, tuple] = {}

    def chain(self, name) -> TypeVersionChain:
        try:
            return self.chains[name]
        except KeyError:
            raise UnknownType(f"no type named '{name}'") from None

    def ensure_new(self, name):
        if name in self.chains:
            raise DuplicateType(f"type '{name}' already exists; evolve it instead")

    def register(self, name, level, node_id, sequence):
        self.ensure_new(name)
        chain = TypeVersionChain(name=name, level=level)
        self.chains[name] = chain
        self._append(chain, node_id, None, sequence)

    def append(self, name, node_id, delta, sequence):
        self._append(self.chain(name), node_id, delta, sequence)

    def _append(self, chain, node_id, delta, sequence):
        version = len(chain.versions) + 1
        chain.versions.append(VersionEntry(version=version, node=node_id, delta=delta, sequence=sequence))
        self._located[node_id] = (chain.name, version)

    def locate(self, node_id):
        """(chain name, version) of a type version node, or None."""
        return self._located.get(node_id)

    def is_protected(self, node_id) -> bool:
        return node_id in self._located

    def entry(self, name, version) -> VersionEntry:
        entry = self.chain(name).entry(version)
        if entry is None:
            raise UnknownVersion(f"type '{name}' has no version {version!r}")
        return entry

    def history(self, name) -> List[HistoryEntry]:
        return [
            HistoryEntry(
                version=entry.version,
                summary="created" if entry.delta is None else (entry.delta.summary() or "unchanged"),
                delta=entry.delta,
                sequence=entry.sequence,
            )
            for entry in self.chain(name).versions
        ]

    def replay(self, graph, name) -> TypeDescription:
        """Fold every recorded delta over the first version's description."""
        chain = self.chain(name)
        description = graph.node(chain.versions[0].node).description
        for entry in chain.versions[1:]:
            description = apply_delta(description, entry.delta)
        return description

    def instances_of(self, graph, name, version="any") -> List[str]:
        chain = self.chain(name)
        if version == "any":
            entries = chain.versions
        else:
            entries = [self.entry(name, version)]
        found = set()
        for entry in entries:
            found.update(graph.neighbors(entry.node, RelationshipKind.INSTANCE_OF, "ParentToChild"))
        return sorted(found, key=id_key)

    def migration_steps(self, graph, name, from_version, to_version) -> List[EvolutionDelta]:
        """Deltas that carry values from one version to another, inverted when going down."""
        chain = self.chain(name)
        self.entry(name, from_version)
        self.entry(name, to_version)
        if to_version >= from_version:
            return [chain.versions[v - 1].delta for v in range(from_version + 1, to_version + 1)]
        steps = []
        for v in range(from_version, to_version, -1):
            before = graph.node(chain.versions[v - 2].node).description
            steps.append(invert_delta(chain.versions[v - 1].delta, before))
        return steps

    def restore(self, chains):
        self.chains = {}
        self._located = {}
        for chain in chains:
            self.chains[chain.name] = chain
            for entry in chain.versions:
                self._located[entry.node] = (chain.name, entry.version)

    def audit(self, graph) -> List[str]:
        """Chain totality, gap-free versions and matching descriptions."""
        problems = []
        for chain in self.chains.values():
            for position, entry in enumerate(chain.versions, start=1):
                node = graph.nodes.get(entry.node)
                if entry.version != position:
                    problems.append(f"chain {chain.name}: version {entry.version} at position {position}")
                if node is None or node.description is None:
                    problems.append(f"chain {chain.name}: v{entry.version} node {entry.node} missing")
                    continue
                if node.description.name != chain.name or node.description.version != entry.version:
                    problems.append(f"chain {chain.name}: node {entry.node} holds the wrong description")
                if node.level != chain.level:
                    problems.append(f"chain {chain.name}: node {entry.node} is on another level")
        for node in graph.nodes.values():
            if node.layer == Layer.MODEL and not self.is_protected(node.id):
                problems.append(f"{node.id}: Model-layer node outside any chain")
        return problems
