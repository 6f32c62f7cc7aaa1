"""Versioned JSON envelope for trained models.

Layout::

    {
      "format": "trailcast.model",
      "version": 1,
      "model_type": "forest" | "boosted" | "lasso" | "intercept",
      "hyperparameters": {...},
      "seed": int | null,
      "columns": [...] | null,
      "columns_sidecar": str | null,
      "checksum": sha256 of the canonical payload JSON,
      "payload": {...}
    }

Serialization is canonical (sorted keys, no whitespace), so equal models give
equal bytes.
"""
import hashlib
import json

from .baseline import InterceptOnly
from .boosting import BoostedModel
from .forest import ForestModel
from .lasso import LassoPath

FORMAT = "trailcast.model"
VERSION = 1

_TYPES = {
    "forest": ForestModel,
    "boosted": BoostedModel,
    "lasso": LassoPath,
    "intercept": InterceptOnly,
}


class ModelFormatError(ValueError):
    """Raised for truncated, corrupted or incompatible model files."""


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _type_name(model) -> str:
    for name, cls in _TYPES.items():
        if isinstance(model, cls):
            return name
    raise TypeError(f"cannot serialize {type(model).__name__}")


def serialize_model(model, columns=None, columns_sidecar=None, seed=None) -> bytes:
    name = _type_name(model)
    payload = model.to_payload()
    body = _dumps(payload)
    if seed is None:
        seed = getattr(model, "seed", None)
    envelope = {
        "format": FORMAT,
        "version": VERSION,
        "model_type": name,
        "hyperparameters": model.hyperparameters(),
        "seed": seed,
        "columns": list(columns) if columns is not None else None,
        "columns_sidecar": columns_sidecar,
        "checksum": hashlib.sha256(body.encode()).hexdigest(),
        "payload": payload,
    }
    return _dumps(envelope).encode("utf-8")


def load_envelope(data: bytes) -> dict:
    try:
        env = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model payload: {exc}") from exc
    if not isinstance(env, dict) or env.get("format") != FORMAT:
        raise ModelFormatError("not a trailcast model file")
    if env.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {env.get('version')!r}; expected {VERSION}")
    if env.get("model_type") not in _TYPES or "payload" not in env:
        raise ModelFormatError("model envelope is missing its type or payload")
    digest = hashlib.sha256(_dumps(env["payload"]).encode()).hexdigest()
    if digest != env.get("checksum"):
        raise ModelFormatError("model payload checksum mismatch")
    return env


def deserialize_model(data: bytes):
    env = load_envelope(data)
    try:
        return _TYPES[env["model_type"]].from_payload(env["payload"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed {env['model_type']} payload: {exc}") from exc
