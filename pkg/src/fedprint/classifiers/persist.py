"""Model files.

A model file is a JSON object with the keys ``format_version``,
``classifier_kind``, ``schema`` (feature names in column order), ``params``,
``seed``, ``payload`` (kind-specific arrays and trees) and ``checksum`` (SHA-256
of the canonical JSON encoding of all other keys). Floats are written in
shortest round-trip form, so loading reproduces decision values exactly.
"""
from __future__ import annotations

import hashlib
import json

from ..errors import CorruptModel
from .forest import ForestModel
from .gbm import GbmModel
from .svm import SvmModel

FORMAT_VERSION = 1
_KINDS = {"forest": ForestModel, "svm": SvmModel, "gbm": GbmModel}
_KEYS = ("format_version", "classifier_kind", "schema", "params", "seed", "payload")


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def save_model(model) -> bytes:
    body = {
        "format_version": FORMAT_VERSION,
        "classifier_kind": model.kind,
        "schema": list(model.names),
        "params": dict(model.params),
        "seed": int(model.seed),
        "payload": model.payload(),
    }
    body["checksum"] = hashlib.sha256(_canonical(body)).hexdigest()
    return (json.dumps(body, sort_keys=True, indent=1, allow_nan=False) + "\n").encode()


def load_model(data: bytes):
    try:
        doc = json.loads(data)
    except (UnicodeDecodeError, ValueError) as exc:
        raise CorruptModel(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or any(k not in doc for k in (*_KEYS, "checksum")):
        raise CorruptModel("model file lacks required keys")
    if doc["format_version"] != FORMAT_VERSION:
        raise CorruptModel(f"unsupported model format_version {doc['format_version']!r}")
    body = {k: doc[k] for k in _KEYS}
    if hashlib.sha256(_canonical(body)).hexdigest() != doc["checksum"]:
        raise CorruptModel("model checksum mismatch")
    cls = _KINDS.get(doc["classifier_kind"])
    if cls is None:
        raise CorruptModel(f"unknown classifier_kind {doc['classifier_kind']!r}")
    try:
        return cls.from_payload(doc["payload"], doc["params"], int(doc["seed"]), doc["schema"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"malformed payload: {exc}") from None
