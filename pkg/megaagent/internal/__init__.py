from .base import (
    JsonObject,
    JsonObjectForm,
    JsonObjectView,
)
from .connector import HTTPConnector
from .jsonl import JsonlWriter, TruncatedLogError, iter_jsonl, read_jsonl
from .time import rfc3339_timestamp, utc_now
