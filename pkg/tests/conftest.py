import pytest

from src.engine.meta_store import MetaObjectStore
from src.engine.models import Level
from src.persistence.journal import MemoryJournal
from tests.builders import define, instance, spec


@pytest.fixture
def store():
    return MetaObjectStore()


@pytest.fixture
def journaled_store():
    return MetaObjectStore(journal=MemoryJournal())


@pytest.fixture
def quadrant(store):
    """
    PartDescription, Part, PartType#1 and Part#1212 with three of the four
    square links in place: PartDescription describes Part and both instances
    are classified. The PartType#1 describes Part#1212 link is left to the test.
    """
    ids = {
        "part_description": define(
            store,
            "PartDescription",
            spec("code", "Text"),
            spec("tolerance", "Decimal"),
            level=Level.META,
            operations=["approve"],
        ),
        "part": define(store, "Part", spec("serial", "Text"), spec("mass", "Decimal"), operations=["assemble"]),
    }
    ids["describes"] = store.link_described_by(ids["part"], ids["part_description"])
    ids["part_type_1"] = instance(store, level=Level.META, code="PT-1", tolerance=0.05)
    ids["part_1212"] = instance(store, serial="1212", mass=4.2)
    store.link_instance_of(ids["part_type_1"], ids["part_description"])
    store.link_instance_of(ids["part_1212"], ids["part"])
    return ids
