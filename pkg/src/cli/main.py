"""
Command-line front end for the meta-object store.

Every invocation opens the store (snapshot plus journal tail), runs one
command, prints its result as canonical records on stdout and, if the command
changed anything, writes a fresh snapshot. Errors go to stderr as one record.
"""
import argparse
import json
import logging
import os
import sys

from src import config
from src.cli.scenario import ScenarioRunner
from src.engine.errors import EngineError
from src.engine.meta_store import MetaObjectStore
from src.engine.models import Layer, PropagationFlag, RelationshipKind
from src.persistence import snapshot
from src.persistence.codec import encode, to_plain
from src.persistence.journal import Journal, replay

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_IO = 4

KIND_NAMES = {
    "aggregation": RelationshipKind.AGGREGATION,
    "generalization": RelationshipKind.GENERALIZATION,
    "describes": RelationshipKind.DESCRIBES,
    "dependency": RelationshipKind.DEPENDENCY,
    "instance-of": RelationshipKind.INSTANCE_OF,
}


class Output:
    """Canonical record printer; silent under --quiet."""

    def __init__(self, quiet=False):
        self.quiet = quiet

    def record(self, record, **fields):
        if not self.quiet:
            print(encode({"record": record, **fields}))


# ---------- argument types ----------
def parse_value(text):
    """JSON scalar if the text is one, else the text itself."""
    try:
        value = json.loads(text)
    except ValueError:
        return text
    return value if isinstance(value, (str, int, float, bool)) else text


def key_value(text):
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got '{text}'")
    return name, parse_value(value)


def attribute_spec(text):
    name, sep, kind = text.partition(":")
    if not sep or not name or not kind:
        raise argparse.ArgumentTypeError(f"expected name:Kind, got '{text}'")
    return {"name": name, "value_kind": kind}


def rename_pair(text):
    old, sep, new = text.partition(":")
    if not sep or not old or not new:
        raise argparse.ArgumentTypeError(f"expected old:new, got '{text}'")
    return [old, new]


def relationship_kind(text):
    if text.lower() in KIND_NAMES:
        return KIND_NAMES[text.lower()]
    try:
        return RelationshipKind(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown relationship kind '{text}'") from None


def propagation_flag(text):
    try:
        return PropagationFlag(text.lower())
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown propagation flag '{text}'") from None


def version_selector(text):
    if text == "any":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"version must be an integer or 'any', got '{text}'") from None


# ---------- type ----------
def type_define(store, args, out):
    description = {
        "name": args.name,
        "attribute_specs": args.attr,
        "operation_specs": args.op,
    }
    node_id = store.create_node(Layer.MODEL, args.level, description=description)
    out.record("type", name=args.name, node=node_id, version=1)


def type_evolve(store, args, out):
    delta = {"added_specs": args.add, "removed_spec_names": args.remove, "renamed": args.rename}
    node_id = store.evolve_type(args.name, delta)
    out.record("type", name=args.name, node=node_id, version=store.chain(args.name).latest.version)


def type_history(store, args, out):
    for entry in store.version_history(args.name):
        out.record("history", name=args.name, **to_plain(entry))


# ---------- node ----------
def node_create(store, args, out):
    description = {"name": args.description} if args.description else None
    node_id = store.create_node(args.layer, args.level, description=description, attributes=dict(args.attr))
    out.record("node", node=store.get_node(node_id))


def node_show(store, args, out):
    out.record("node", node=store.get_node(args.node))


def node_delete(store, args, out):
    report = store.delete_node(args.node)
    out.record("deleted", nodes=report.nodes, relationships=report.relationships)


def node_copy(store, args, out):
    out.record("report", **to_plain(store.propagate_copy(args.node)))


def node_move(store, args, out):
    out.record("report", **to_plain(store.propagate_move(args.node, args.new_parent)))


def node_version(store, args, out):
    out.record("report", **to_plain(store.propagate_version(args.node)))


def node_set(store, args, out):
    deliveries = store.set_attribute(args.node, args.name, parse_value(args.value))
    out.record("set", node=args.node, name=args.name, deliveries=deliveries)


def node_mediate(store, args, out):
    deliveries = store.mediate(args.node, dict(args.message))
    out.record("mediate", node=args.node, deliveries=deliveries)


def node_migrate(store, args, out):
    store.migrate_instance(args.node, args.version, fill=dict(args.fill))
    out.record("node", node=store.get_node(args.node))


# ---------- link ----------
def link_create(store, args, out):
    if args.kind == RelationshipKind.INSTANCE_OF:
        if len(args.children) != 1:
            raise argparse.ArgumentTypeError("instance-of takes exactly INSTANCE MODEL")
        rel_id = store.link_instance_of(args.parent, args.children[0])
    else:
        rel_id = store.create_relationship(args.kind, args.parent, args.children)
    out.record("relationship", relationship=store.get_relationship(rel_id))


def link_show(store, args, out):
    out.record("relationship", relationship=store.get_relationship(args.relationship))


def link_set(store, args, out):
    store.set_relationship_attribute(args.relationship, args.name, parse_value(args.value))
    out.record("relationship", relationship=store.get_relationship(args.relationship))


def link_policy(store, args, out):
    policy = to_plain(store.get_relationship(args.relationship).policy)
    policy.update(dict(args.flags))
    store.set_policy(args.relationship, policy)
    out.record("relationship", relationship=store.get_relationship(args.relationship))


# ---------- query ----------
def query_closure(store, args, out):
    nodes = store.closure(args.node, args.kind, args.flag)
    out.record("closure", start=args.node, kind=args.kind, flag=args.flag, nodes=nodes)


def query_instances(store, args, out):
    nodes = store.instances_of(args.name, args.version)
    out.record("instances", name=args.name, version=args.version, nodes=nodes)


def query_schema(store, args, out):
    out.record("schema", node=args.node, specs=store.effective_schema(args.node))


def query_inbox(store, args, out):
    out.record("inbox", node=args.node, events=store.inbox(args.node))


def query_graph(store, args, out):
    out.record("graph", **to_plain(store.subgraph(args.node, args.kind)))


def query_supers(store, args, out):
    out.record("superclasses", node=args.node, nodes=store.superclasses(args.node))


def query_subs(store, args, out):
    out.record("subclasses", node=args.node, nodes=store.subclasses(args.node))


def query_described(store, args, out):
    out.record(
        "described",
        node=args.node,
        describers=store.describers_of(args.node),
        describes=store.described_by_meta(args.node),
    )


def query_audit(store, args, out):
    out.record("audit", problems=store.audit())


def query_constructs(store, args, out):
    out.record("constructs", vocabulary=store.builtin_constructs(), census=store.construct_census())


# ---------- scenario and store files ----------
def scenario_run(args, paths, out):
    store_file, journal_file = paths
    journal = Journal(journal_file)
    journal.reset(0)
    store = MetaObjectStore(journal=journal)
    ScenarioRunner(store, out).run_file(args.file)
    snapshot.dump(store, store_file)


def store_dump(args, paths, out):
    store = open_store(*paths)
    size = snapshot.dump(store, args.path)
    out.record("dumped", path=args.path, bytes=size, sequence=store.command_sequence)


def store_load(args, paths, out):
    store_file, journal_file = paths
    store = snapshot.load(args.path)
    snapshot.dump(store, store_file)
    Journal(journal_file).reset(store.command_sequence)
    out.record(
        "loaded",
        path=args.path,
        sequence=store.command_sequence,
        nodes=len(store.graph.nodes),
        relationships=len(store.graph.relationships),
    )


def open_store(store_file, journal_file):
    """Load the last snapshot, then replay journal entries written after it."""
    store = MetaObjectStore()
    if os.path.exists(store_file):
        snapshot.load(store_file, store)
    journal = Journal(journal_file)
    _, records = journal.read()
    tail = [record for record in records if record.sequence > store.command_sequence]
    if tail:
        logger.warning(f"Replaying {len(tail)} journal entries past the snapshot")
        replay(tail, store)
    store.journal = journal
    logger.info(f"Opened store {store_file} at sequence {store.command_sequence}")
    return store


def build_parser():
    """Build the argument parser with its command groups."""
    parser = argparse.ArgumentParser(prog="ddso", description="Description-driven meta-object store")
    parser.add_argument("--store", help="snapshot path (default: $DDSO_STORE or ./ddso.store)")
    parser.add_argument("--journal", help="journal path (default: $DDSO_JOURNAL or <store>.journal)")
    parser.add_argument("--quiet", action="store_true", help="print nothing on success")
    groups = parser.add_subparsers(dest="group", required=True)

    def command(actions, name, handler, mutates=False, opens=True, **kwargs):
        sub = actions.add_parser(name, **kwargs)
        sub.set_defaults(handler=handler, mutates=mutates, opens=opens)
        return sub

    # type
    actions = groups.add_parser("type", help="define, evolve and inspect types").add_subparsers(
        dest="action", required=True
    )
    p = command(actions, "define", type_define, mutates=True)
    p.add_argument("name")
    p.add_argument("--level", choices=["Base", "Meta"], default="Base")
    p.add_argument("--attr", action="append", default=[], type=attribute_spec, metavar="NAME:KIND")
    p.add_argument("--op", action="append", default=[], metavar="NAME")
    p = command(actions, "evolve", type_evolve, mutates=True)
    p.add_argument("name")
    p.add_argument("--add", action="append", default=[], type=attribute_spec, metavar="NAME:KIND")
    p.add_argument("--remove", action="append", default=[], metavar="NAME")
    p.add_argument("--rename", action="append", default=[], type=rename_pair, metavar="OLD:NEW")
    p = command(actions, "history", type_history)
    p.add_argument("name")

    # node
    actions = groups.add_parser("node", help="create and change nodes").add_subparsers(dest="action", required=True)
    p = command(actions, "create", node_create, mutates=True)
    p.add_argument("layer", choices=["Instance", "Model"])
    p.add_argument("level", choices=["Base", "Meta"])
    p.add_argument("--attr", action="append", default=[], type=key_value, metavar="NAME=VALUE")
    p.add_argument("--description", metavar="NAME")
    p = command(actions, "show", node_show)
    p.add_argument("node")
    for name, handler in (("delete", node_delete), ("copy", node_copy), ("version", node_version)):
        command(actions, name, handler, mutates=True).add_argument("node")
    p = command(actions, "move", node_move, mutates=True)
    p.add_argument("node")
    p.add_argument("new_parent")
    p = command(actions, "set", node_set, mutates=True)
    p.add_argument("node")
    p.add_argument("name")
    p.add_argument("value")
    p = command(actions, "mediate", node_mediate, mutates=True)
    p.add_argument("node")
    p.add_argument("message", nargs="*", type=key_value, metavar="NAME=VALUE")
    p = command(actions, "migrate", node_migrate, mutates=True)
    p.add_argument("node")
    p.add_argument("version", type=int)
    p.add_argument("--fill", action="append", default=[], type=key_value, metavar="NAME=VALUE")

    # link
    actions = groups.add_parser("link", help="create and change relationships").add_subparsers(
        dest="action", required=True
    )
    for name, kind in KIND_NAMES.items():
        p = command(actions, name, link_create, mutates=True)
        p.set_defaults(kind=kind)
        p.add_argument("parent")
        p.add_argument("children", nargs="+")
    p = command(actions, "show", link_show)
    p.add_argument("relationship")
    p = command(actions, "set", link_set, mutates=True)
    p.add_argument("relationship")
    p.add_argument("name")
    p.add_argument("value")
    p = command(actions, "policy", link_policy, mutates=True)
    p.add_argument("relationship")
    p.add_argument("flags", nargs="+", type=key_value, metavar="FLAG=BOOL")

    # query
    actions = groups.add_parser("query", help="read-only queries").add_subparsers(dest="action", required=True)
    p = command(actions, "closure", query_closure)
    p.add_argument("node")
    p.add_argument("kind", type=relationship_kind)
    p.add_argument("flag", type=propagation_flag)
    p = command(actions, "instances-of", query_instances)
    p.add_argument("name")
    p.add_argument("--version", type=version_selector, default="any")
    for name, handler in (
        ("schema", query_schema),
        ("inbox", query_inbox),
        ("supers", query_supers),
        ("subs", query_subs),
        ("described", query_described),
    ):
        command(actions, name, handler).add_argument("node")
    p = command(actions, "graph", query_graph)
    p.add_argument("node")
    p.add_argument("kind", type=relationship_kind)
    command(actions, "audit", query_audit)
    command(actions, "constructs", query_constructs)

    # scenario
    actions = groups.add_parser("scenario", help="run .ddso scenario files").add_subparsers(
        dest="action", required=True
    )
    command(actions, "run", scenario_run, opens=False).add_argument("file")

    # store
    actions = groups.add_parser("store", help="snapshot files").add_subparsers(dest="action", required=True)
    command(actions, "dump", store_dump, opens=False).add_argument("path")
    command(actions, "load", store_load, opens=False).add_argument("path")
    return parser


def main(argv=None) -> int:
    """
    Run one CLI command.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        int: Exit code (0 success, 2 usage, 3 domain error, 4 io error)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(stream=sys.stderr, level=config.log_level(), format="%(levelname)s %(name)s: %(message)s")

    out = Output(quiet=args.quiet)
    store_file = config.store_path(args.store)
    paths = (store_file, config.journal_path(store_file, args.journal))
    try:
        if not args.opens:
            args.handler(args, paths, out)
        else:
            store = open_store(*paths)
            args.handler(store, args, out)
            if args.mutates:
                snapshot.dump(store, store_file)
    except argparse.ArgumentTypeError as e:
        print(f"ddso: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EngineError as e:
        print(encode({"error": e.name, "message": str(e), "module": e.module, "record": "error"}), file=sys.stderr)
        return EXIT_IO if e.family == "io" else EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
