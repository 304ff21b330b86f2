"""
Whole-store snapshot files.

A snapshot is a header, every node, relationship, type chain and non-empty
inbox in ascending id order, then a trailer with the counts. The same state
always dumps to the same bytes.
"""
import logging
import os

from src.engine.errors import CorruptSnapshot, IoFailure
from src.engine.models import id_key
from src.persistence.codec import decode, encode, validate
from src.persistence.records import (
    FORMAT_VERSION,
    ChainRecord,
    InboxRecord,
    NodeRecord,
    RelationshipRecord,
    SnapshotHeader,
    SnapshotTrailer,
)

logger = logging.getLogger(__name__)

BODY_RECORDS = {
    "node": NodeRecord,
    "relationship": RelationshipRecord,
    "chain": ChainRecord,
    "inbox": InboxRecord,
}


def dumps(store) -> bytes:
    """Encode the full state of a store."""
    graph = store.graph
    inboxes = {node: events for node, events in store.channel.inboxes.items() if events}
    lines = [
        SnapshotHeader(
            last_sequence=store.command_sequence,
            node_counter=graph.node_counter,
            relationship_counter=graph.relationship_counter,
            event_sequence=store.channel.sequence,
        )
    ]
    lines += [NodeRecord(node=graph.nodes[n]) for n in sorted(graph.nodes, key=id_key)]
    lines += [RelationshipRecord(relationship=graph.relationships[r]) for r in sorted(graph.relationships, key=id_key)]
    lines += [ChainRecord(chain=store.registry.chains[name]) for name in sorted(store.registry.chains)]
    lines += [InboxRecord(node=n, events=inboxes[n]) for n in sorted(inboxes, key=id_key)]
    lines.append(
        SnapshotTrailer(
            nodes=len(graph.nodes),
            relationships=len(graph.relationships),
            chains=len(store.registry.chains),
            inboxes=len(inboxes),
        )
    )
    return "".join(encode(line) + "\n" for line in lines).encode("ascii")


def dump(store, path) -> int:
    """
    Write a snapshot atomically (temp file, then rename).

    Returns:
        int: Number of bytes written
    """
    data = dumps(store)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"cannot write snapshot {path}: {e}") from None
    logger.info(f"Wrote snapshot {path} at sequence {store.command_sequence} ({len(data)} bytes)")
    return len(data)


def loads(data, store=None):
    """
    Rebuild a store from snapshot bytes.

    Raises:
        CorruptSnapshot: If a line is malformed, the trailer is missing or does
            not match, or the restored state breaks a store invariant
    """
    from src.engine.meta_store import MetaObjectStore

    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise CorruptSnapshot("snapshot is not ASCII") from None
    lines = text.splitlines()
    if not lines:
        raise CorruptSnapshot("empty snapshot")

    header = validate(SnapshotHeader, decode(lines[0], 1, CorruptSnapshot), 1, CorruptSnapshot)
    if header.format_version != FORMAT_VERSION:
        raise CorruptSnapshot(f"unsupported snapshot format {header.format_version}")
    body = {name: [] for name in BODY_RECORDS}
    trailer = None
    for lineno, line in enumerate(lines[1:], start=2):
        if trailer is not None:
            raise CorruptSnapshot(f"line {lineno}: data after the end record")
        data = decode(line, lineno, CorruptSnapshot)
        kind = data.get("record") if isinstance(data, dict) else None
        if kind == "end":
            trailer = validate(SnapshotTrailer, data, lineno, CorruptSnapshot)
        elif kind in BODY_RECORDS:
            body[kind].append(validate(BODY_RECORDS[kind], data, lineno, CorruptSnapshot))
        else:
            raise CorruptSnapshot(f"line {lineno}: unknown record {kind!r}")
    if trailer is None:
        raise CorruptSnapshot("snapshot is truncated: no end record")
    counts = (len(body["node"]), len(body["relationship"]), len(body["chain"]), len(body["inbox"]))
    if counts != (trailer.nodes, trailer.relationships, trailer.chains, trailer.inboxes):
        raise CorruptSnapshot(f"record counts {counts} do not match the end record")
    highest_node = max((id_key(r.node.id)[1] for r in body["node"]), default=0)
    highest_rel = max((id_key(r.relationship.id)[1] for r in body["relationship"]), default=0)
    if highest_node > header.node_counter or highest_rel > header.relationship_counter:
        raise CorruptSnapshot("id counters are behind the stored ids")

    store = store if store is not None else MetaObjectStore()
    store.restore(
        nodes=[r.node for r in body["node"]],
        relationships=[r.relationship for r in body["relationship"]],
        chains=[r.chain for r in body["chain"]],
        inboxes={r.node: r.events for r in body["inbox"]},
        last_sequence=header.last_sequence,
        node_counter=header.node_counter,
        relationship_counter=header.relationship_counter,
        event_sequence=header.event_sequence,
    )
    problems = store.audit()
    if problems:
        raise CorruptSnapshot("restored state is inconsistent: " + "; ".join(problems[:5]))
    return store


def load(path, store=None):
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoFailure(f"cannot read snapshot {path}: {e}") from None
    return loads(data, store)
