import json
from datetime import datetime, timezone
from typing import Any

from dateutil import parser as dtp
from dateutil.parser import ParserError
from pydantic import BaseModel


def utc_now_iso_z() -> str:
    return datetime.now(tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_iso_z(s: str) -> datetime:
    """
    Parse a timestamp written by utc_now_iso_z (or any ISO-8601 variant) into
    an aware UTC datetime. Naive inputs are taken as UTC.
    """
    try:
        dt = dtp.parse(s)
    except ParserError as exc:
        raise ParserError(f"Unsupported timestamp format: {s}") from exc
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def to_iso_z(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def canonical_json(obj: Any) -> str:
    """
    Deterministic JSON string for a pydantic model or plain JSON value.
    """
    if isinstance(obj, BaseModel):
        obj = json.loads(obj.json())
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
