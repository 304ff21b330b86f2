"""
Canonical line encoding shared by the journal, the snapshot and CLI output.

Keys sorted, no insignificant whitespace, ASCII only, one record per line, so
the same state always produces the same bytes.
"""
import dataclasses
import json
from enum import Enum

from pydantic import BaseModel, ValidationError


def to_plain(value):
    """Turn models (and containers of models) into JSON-ready data."""
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {field.name: to_plain(getattr(value, field.name)) for field in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(key): to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    return value


def encode(value) -> str:
    """One canonical line, without the trailing newline."""
    return json.dumps(to_plain(value), sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def decode(line, lineno, error_cls):
    """
    Parse one line.

    Raises:
        error_cls: With the line number if the line is not valid JSON
    """
    try:
        return json.loads(line)
    except json.JSONDecodeError as e:
        raise error_cls(f"line {lineno}: not a valid record ({e.msg})") from None


def validate(model_cls, data, lineno, error_cls):
    """Validate parsed data into a record model, reporting the line on failure."""
    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise error_cls(f"line {lineno}: invalid {model_cls.__name__} at '{where}': {first['msg']}") from None
