"""
Write-ahead journal of store commands.

One header line, then one canonical entry per successful command. Every
append is flushed and fsynced before the command is reported as done, so a
crash loses at most the command that was running.
"""
import logging
import os
import threading
from typing import List

from src.engine.errors import CorruptJournal, GapInJournal, IoFailure
from src.persistence.codec import decode, encode, validate
from src.persistence.records import FORMAT_VERSION, JournalHeader, JournalRecord

logger = logging.getLogger(__name__)


def check_sequence(records, base_sequence=0):
    """
    Raises:
        GapInJournal: If record sequences do not continue base_sequence one by one
    """
    expected = base_sequence + 1
    for record in records:
        if record.sequence != expected:
            raise GapInJournal(f"expected record {expected}, found {record.sequence}")
        expected += 1


def parse(lines) -> tuple:
    """
    Parse journal lines into (header, records).

    An empty input is an empty journal with a default header.

    Raises:
        CorruptJournal: If a line is not a valid header or entry
        GapInJournal: If sequences skip or repeat
    """
    lines = [line for line in lines if line.strip()]
    if not lines:
        return JournalHeader(), []
    header = validate(JournalHeader, decode(lines[0], 1, CorruptJournal), 1, CorruptJournal)
    if header.format_version != FORMAT_VERSION:
        raise CorruptJournal(f"unsupported journal format {header.format_version}")
    records = [
        validate(JournalRecord, decode(line, lineno, CorruptJournal), lineno, CorruptJournal)
        for lineno, line in enumerate(lines[1:], start=2)
    ]
    check_sequence(records, header.base_sequence)
    return header, records


class Journal:
    """Append-only journal file."""

    def __init__(self, path):
        """
        Initialize the journal.

        Args:
            path: Journal file; created with a header on first append
        """
        self.path = str(path)
        self._lock = threading.Lock()

    def read(self) -> tuple:
        """(header, records) currently on disk."""
        if not os.path.exists(self.path):
            return JournalHeader(), []
        try:
            with open(self.path, "r", encoding="ascii") as f:
                return parse(f.read().splitlines())
        except (OSError, UnicodeDecodeError) as e:
            raise IoFailure(f"cannot read journal {self.path}: {e}") from None

    def append(self, record):
        with self._lock:
            try:
                is_new = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
                with open(self.path, "a", encoding="ascii") as f:
                    if is_new:
                        f.write(encode(JournalHeader()) + "\n")
                    f.write(encode(record) + "\n")
                    f.flush()
                    os.fsync(f.fileno())
            except OSError as e:
                raise IoFailure(f"cannot append to journal {self.path}: {e}") from None

    def reset(self, base_sequence):
        """Start over after a snapshot: keep only a header continuing at base_sequence."""
        with self._lock:
            tmp = self.path + ".tmp"
            try:
                with open(tmp, "w", encoding="ascii") as f:
                    f.write(encode(JournalHeader(base_sequence=base_sequence)) + "\n")
                    f.flush()
                    os.fsync(f.fileno())
                os.replace(tmp, self.path)
            except OSError as e:
                raise IoFailure(f"cannot reset journal {self.path}: {e}") from None
        logger.debug(f"Journal {self.path} reset at sequence {base_sequence}")


class MemoryJournal:
    """In-memory journal with the same append interface, for tests and dry runs."""

    def __init__(self):
        self.records: List[JournalRecord] = []

    def append(self, record):
        self.records.append(record)

    def lines(self) -> List[str]:
        return [encode(JournalHeader())] + [encode(record) for record in self.records]


def replay(records, store=None):
    """
    Re-execute journal records, on a fresh store unless one is given.

    Returns:
        MetaObjectStore: The store after every record was applied

    Raises:
        GapInJournal: If a record does not follow the store's last sequence
        ReplayDivergence: If a record allocates other ids than it recorded
    """
    from src.engine.meta_store import MetaObjectStore

    store = store if store is not None else MetaObjectStore()
    for record in records:
        if record.sequence <= store.command_sequence:
            continue
        store.apply(record)
    logger.info(f"Replayed journal up to sequence {store.command_sequence}")
    return store
