"""
Scenario files: scripted command sequences with expectations.

A `.ddso` file holds one JSON object per line. Blank lines and lines starting
with `#` are skipped. A command line names a store command and its arguments
and may bind the id it produced to a name; later string arguments of the form
`$name` resolve to that id. An expectation line checks the store and aborts
the run on the first mismatch.
"""
import json
import logging

from src.engine.errors import EngineError, ExpectationFailed, MalformedScenario
from src.engine.meta_store import COMMANDS
from src.engine.models import Layer, id_key
from src.persistence.codec import encode, to_plain

logger = logging.getLogger(__name__)


class ScenarioRunner:
    """
    Runs scenario lines against a store.

    Every `evolve_type` is guarded: the encoded records of all Instance-layer
    nodes must be byte-identical before and after it.
    """

    def __init__(self, store, out):
        """
        Initialize the runner.

        Args:
            store: The MetaObjectStore to drive
            out: Record printer with a `record(kind, **fields)` method
        """
        self.store = store
        self.out = out
        self.bindings = {}
        self.commands = 0
        self.expectations = 0
        self.checks = {
            "node_count": self._node_count,
            "relationship_count": self._relationship_count,
            "chain_length": self._chain_length,
            "instances_of": self._instances_of,
            "version": self._version,
            "closure": self._closure,
            "inbox_size": self._inbox_size,
            "conforms": self._conforms,
            "schema_names": self._schema_names,
            "rejected": self._rejected,
        }

    def run_file(self, path):
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = f.read().splitlines()
        except OSError as e:
            raise MalformedScenario(f"cannot read scenario {path}: {e}") from None
        logger.info(f"Running scenario {path} ({len(lines)} lines)")
        self.run_lines(lines)

    def run_lines(self, lines):
        """
        Run every line, then print a summary record.

        Raises:
            MalformedScenario: If a line is not a command or an expectation
            ExpectationFailed: On the first expectation that does not hold
            EngineError: If a command that is not expected to fail is rejected
        """
        for lineno, line in enumerate(lines, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                entry = json.loads(text)
            except ValueError as e:
                raise MalformedScenario(f"line {lineno}: not valid JSON ({e})") from None
            if not isinstance(entry, dict):
                raise MalformedScenario(f"line {lineno}: expected an object")
            if "expect" in entry:
                self._expect(lineno, entry)
            elif "op" in entry:
                self._command(lineno, entry)
            else:
                raise MalformedScenario(f"line {lineno}: neither a command nor an expectation")
        self.out.record("scenario", **self.summary())

    def summary(self):
        registry = self.store.registry
        instances = {}
        for name in sorted(registry.chains):
            counts = {}
            for entry in registry.chains[name].versions:
                found = self.store.instances_of(name, entry.version)
                if found:
                    counts[str(entry.version)] = len(found)
            instances[name] = counts
        return {
            "commands": self.commands,
            "expectations": self.expectations,
            "nodes": len(self.store.graph.nodes),
            "relationships": len(self.store.graph.relationships),
            "chains": {name: len(chain.versions) for name, chain in sorted(registry.chains.items())},
            "instances": instances,
        }

    # ---------- commands ----------
    def resolve(self, value, lineno):
        """Replace `$name` strings with bound ids, recursively."""
        if isinstance(value, str) and value.startswith("$"):
            try:
                return self.bindings[value[1:]]
            except KeyError:
                raise MalformedScenario(f"line {lineno}: unbound name '{value}'") from None
        if isinstance(value, dict):
            return {key: self.resolve(item, lineno) for key, item in value.items()}
        if isinstance(value, list):
            return [self.resolve(item, lineno) for item in value]
        return value

    def _parse_command(self, lineno, entry):
        op = entry.get("op")
        if op not in COMMANDS:
            raise MalformedScenario(f"line {lineno}: unknown command {op!r}")
        args = entry.get("args", {})
        if not isinstance(args, dict):
            raise MalformedScenario(f"line {lineno}: args must be an object")
        return op, self.resolve(args, lineno)

    def _command(self, lineno, entry):
        op, args = self._parse_command(lineno, entry)
        before = self._instance_payloads() if op == "evolve_type" else None
        result = self.store.execute(op, args)
        self.commands += 1
        if before is not None and self._instance_payloads() != before:
            raise ExpectationFailed(f"line {lineno}: evolve_type changed an Instance-layer node")
        bind = entry.get("bind")
        if bind:
            primary = result if isinstance(result, str) else next(iter(self.store.last_result_ids), None)
            if primary is None:
                raise MalformedScenario(f"line {lineno}: '{op}' produced no id to bind to '{bind}'")
            self.bindings[bind] = primary

    def _instance_payloads(self):
        graph = self.store.graph
        return [
            encode(graph.nodes[node_id])
            for node_id in sorted(graph.nodes, key=id_key)
            if graph.nodes[node_id].layer == Layer.INSTANCE
        ]

    # ---------- expectations ----------
    def _expect(self, lineno, entry):
        name = entry["expect"]
        check = self.checks.get(name)
        if check is None:
            raise MalformedScenario(f"line {lineno}: unknown expectation {name!r}")
        if "equals" not in entry:
            raise MalformedScenario(f"line {lineno}: expectation needs 'equals'")
        expected = self.resolve(entry["equals"], lineno)
        actual = to_plain(check(lineno, entry))
        if isinstance(expected, int) and not isinstance(expected, bool) and isinstance(actual, list):
            actual = len(actual)
        self.expectations += 1
        ok = actual == expected
        self.out.record("expect", line=lineno, check=name, ok=ok, actual=actual)
        if not ok:
            raise ExpectationFailed(f"line {lineno}: {name} expected {expected!r}, got {actual!r}")

    def _arg(self, lineno, entry, key):
        if key not in entry:
            raise MalformedScenario(f"line {lineno}: '{entry['expect']}' needs '{key}'")
        return self.resolve(entry[key], lineno)

    def _node_count(self, lineno, entry):
        return len(self.store.graph.nodes)

    def _relationship_count(self, lineno, entry):
        return len(self.store.graph.relationships)

    def _chain_length(self, lineno, entry):
        return len(self.store.chain(self._arg(lineno, entry, "name")).versions)

    def _instances_of(self, lineno, entry):
        return self.store.instances_of(self._arg(lineno, entry, "name"), entry.get("version", "any"))

    def _version(self, lineno, entry):
        return self.store.get_node(self._arg(lineno, entry, "node")).version

    def _closure(self, lineno, entry):
        return self.store.closure(
            self._arg(lineno, entry, "node"), self._arg(lineno, entry, "kind"), self._arg(lineno, entry, "flag")
        )

    def _inbox_size(self, lineno, entry):
        return len(self.store.inbox(self._arg(lineno, entry, "node")))

    def _conforms(self, lineno, entry):
        return self.store.conforms(self._arg(lineno, entry, "node"))

    def _schema_names(self, lineno, entry):
        return [spec.name for spec in self.store.effective_schema(self._arg(lineno, entry, "node"))]

    def _rejected(self, lineno, entry):
        """Run an embedded command that must fail; the check value is the error name."""
        op, args = self._parse_command(lineno, entry)
        try:
            self.store.execute(op, args)
        except EngineError as e:
            logger.warning(f"line {lineno}: {op} rejected with {e.name}: {e}")
            return e.name
        return None
