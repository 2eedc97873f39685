"""Line-oriented oracle wire protocol: one JSON object per UTF-8 line.

Message vocabulary (field names are the wire contract):

* ``{"type": "hello", "version": 1, "embedding_dim": N,
  "supports_discriminator": bool, "space_fingerprint": hex}`` -- sent by
  the oracle as soon as the connection opens.  Raw-objective oracles add
  ``"raw_objectives": true`` and ``"objective_count": k``.
* ``{"type": "target", "kind": "text"|"image_path", "payload": str}`` and
  ``{"type": "target_ok", "embedding": [..]}``.
* ``{"type": "eval", "id": n, "genomes": [[..], ..]}`` and
  ``{"type": "eval_ok", "id": n, "results": [..]}`` where each result is
  ``{"embedding": [..], "d_prob"?: p}``, ``{"objectives": [..]}`` or
  ``{"error": msg}``.
* ``{"type": "error", "id"?: n, "message": str}``.
* ``{"type": "render", "genome": [..], "out_path": str}`` and
  ``{"type": "render_ok", "path": str}`` -- optional, used to save the
  decoded output of the best genome at run end.

All numbers travel as plain JSON decimals; genome values are numbers with
booleans encoded as 0/1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

__all__ = [
    "PROTOCOL_VERSION",
    "ProtocolError",
    "Hello",
    "TargetRequest",
    "TargetOk",
    "EvalRequest",
    "EvalResult",
    "EvalOk",
    "RenderRequest",
    "RenderOk",
    "ErrorMessage",
    "Message",
    "encode_line",
    "decode_line",
]

PROTOCOL_VERSION = 1


class ProtocolError(ValueError):
    """Malformed or invalid wire message; ``where`` locates the problem."""

    def __init__(self, message: str, where: Optional[str] = None):
        self.where = where
        super().__init__(f"{message} (at {where})" if where else message)


@dataclass(frozen=True)
class Hello:
    version: int
    embedding_dim: int
    supports_discriminator: bool
    space_fingerprint: str
    raw_objectives: bool = False
    objective_count: Optional[int] = None

    def to_wire(self) -> dict:
        wire: dict = {
            "type": "hello",
            "version": self.version,
            "embedding_dim": self.embedding_dim,
            "supports_discriminator": self.supports_discriminator,
            "space_fingerprint": self.space_fingerprint,
        }
        if self.raw_objectives:
            wire["raw_objectives"] = True
            wire["objective_count"] = self.objective_count
        return wire


@dataclass(frozen=True)
class TargetRequest:
    kind: str  # "text" | "image_path"
    payload: str

    def to_wire(self) -> dict:
        return {"type": "target", "kind": self.kind, "payload": self.payload}


@dataclass(frozen=True)
class TargetOk:
    embedding: tuple[float, ...]

    def to_wire(self) -> dict:
        return {"type": "target_ok", "embedding": list(self.embedding)}


@dataclass(frozen=True)
class EvalRequest:
    id: int
    genomes: tuple[tuple[float, ...], ...]

    def to_wire(self) -> dict:
        return {"type": "eval", "id": self.id, "genomes": [list(g) for g in self.genomes]}


@dataclass(frozen=True)
class EvalResult:
    embedding: Optional[tuple[float, ...]] = None
    d_prob: Optional[float] = None
    objectives: Optional[tuple[float, ...]] = None
    error: Optional[str] = None

    def to_wire(self) -> dict:
        if self.error is not None:
            return {"error": self.error}
        if self.objectives is not None:
            return {"objectives": list(self.objectives)}
        wire: dict = {"embedding": list(self.embedding or ())}
        if self.d_prob is not None:
            wire["d_prob"] = self.d_prob
        return wire


@dataclass(frozen=True)
class EvalOk:
    id: int
    results: tuple[EvalResult, ...]

    def to_wire(self) -> dict:
        return {"type": "eval_ok", "id": self.id, "results": [r.to_wire() for r in self.results]}


@dataclass(frozen=True)
class RenderRequest:
    genome: tuple[float, ...]
    out_path: str

    def to_wire(self) -> dict:
        return {"type": "render", "genome": list(self.genome), "out_path": self.out_path}


@dataclass(frozen=True)
class RenderOk:
    path: str

    def to_wire(self) -> dict:
        return {"type": "render_ok", "path": self.path}


@dataclass(frozen=True)
class ErrorMessage:
    message: str
    id: Optional[int] = None

    def to_wire(self) -> dict:
        wire: dict = {"type": "error", "message": self.message}
        if self.id is not None:
            wire["id"] = self.id
        return wire


Message = Union[
    Hello, TargetRequest, TargetOk, EvalRequest, EvalOk, RenderRequest, RenderOk, ErrorMessage
]


def encode_line(message: Message) -> str:
    """Serialize a message to its single-line wire form (no newline)."""
    return json.dumps(message.to_wire(), separators=(", ", ": "))


def _as_int(value: object, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProtocolError(f"expected an integer, got {value!r}", where)
    return value


def _as_number(value: object, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"expected a number, got {value!r}", where)
    return float(value)


def _as_str(value: object, where: str) -> str:
    if not isinstance(value, str):
        raise ProtocolError(f"expected a string, got {value!r}", where)
    return value


def _as_bool(value: object, where: str) -> bool:
    if not isinstance(value, bool):
        raise ProtocolError(f"expected a boolean, got {value!r}", where)
    return value


def _as_vector(value: object, where: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ProtocolError(f"expected a list of numbers, got {value!r}", where)
    return tuple(_as_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def _get(obj: dict, key: str, where: str) -> object:
    if key not in obj:
        raise ProtocolError(f"missing field {key!r}", where)
    return obj[key]


def _decode_eval_result(obj: object, where: str) -> EvalResult:
    if not isinstance(obj, dict):
        raise ProtocolError(f"expected a result object, got {obj!r}", where)
    if "error" in obj:
        return EvalResult(error=_as_str(obj["error"], f"{where}.error"))
    if "objectives" in obj:
        return EvalResult(objectives=_as_vector(obj["objectives"], f"{where}.objectives"))
    embedding = _as_vector(_get(obj, "embedding", where), f"{where}.embedding")
    d_prob = None
    if "d_prob" in obj:
        d_prob = _as_number(obj["d_prob"], f"{where}.d_prob")
    return EvalResult(embedding=embedding, d_prob=d_prob)


def decode_line(line: str) -> Message:
    """Parse one wire line into a typed message.

    Raises :class:`ProtocolError` with a position (character offset for
    JSON syntax, field path for schema breaches) on invalid input.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc.msg}", where=f"char {exc.pos}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("message must be a JSON object", where="$")
    msg_type = _as_str(_get(obj, "type", "$"), "$.type")

    if msg_type == "hello":
        raw = bool(obj.get("raw_objectives", False))
        count = None
        if raw:
            count = _as_int(_get(obj, "objective_count", "hello"), "hello.objective_count")
            if count < 1:
                raise ProtocolError("objective_count must be >= 1", "hello.objective_count")
        return Hello(
            version=_as_int(_get(obj, "version", "hello"), "hello.version"),
            embedding_dim=_as_int(_get(obj, "embedding_dim", "hello"), "hello.embedding_dim"),
            supports_discriminator=_as_bool(
                _get(obj, "supports_discriminator", "hello"), "hello.supports_discriminator"
            ),
            space_fingerprint=_as_str(
                _get(obj, "space_fingerprint", "hello"), "hello.space_fingerprint"
            ),
            raw_objectives=raw,
            objective_count=count,
        )
    if msg_type == "target":
        kind = _as_str(_get(obj, "kind", "target"), "target.kind")
        if kind not in ("text", "image_path"):
            raise ProtocolError(f"unknown target kind {kind!r}", "target.kind")
        return TargetRequest(kind=kind, payload=_as_str(_get(obj, "payload", "target"), "target.payload"))
    if msg_type == "target_ok":
        return TargetOk(embedding=_as_vector(_get(obj, "embedding", "target_ok"), "target_ok.embedding"))
    if msg_type == "eval":
        request_id = _as_int(_get(obj, "id", "eval"), "eval.id")
        genomes_obj = _get(obj, "genomes", "eval")
        if not isinstance(genomes_obj, list):
            raise ProtocolError("genomes must be a list", "eval.genomes")
        genomes = tuple(
            _as_vector(g, f"eval.genomes[{i}]") for i, g in enumerate(genomes_obj)
        )
        return EvalRequest(id=request_id, genomes=genomes)
    if msg_type == "eval_ok":
        request_id = _as_int(_get(obj, "id", "eval_ok"), "eval_ok.id")
        results_obj = _get(obj, "results", "eval_ok")
        if not isinstance(results_obj, list):
            raise ProtocolError("results must be a list", "eval_ok.results")
        results = tuple(
            _decode_eval_result(r, f"eval_ok.results[{i}]") for i, r in enumerate(results_obj)
        )
        return EvalOk(id=request_id, results=results)
    if msg_type == "render":
        return RenderRequest(
            genome=_as_vector(_get(obj, "genome", "render"), "render.genome"),
            out_path=_as_str(_get(obj, "out_path", "render"), "render.out_path"),
        )
    if msg_type == "render_ok":
        return RenderOk(path=_as_str(_get(obj, "path", "render_ok"), "render_ok.path"))
    if msg_type == "error":
        message_id = None
        if "id" in obj and obj["id"] is not None:
            message_id = _as_int(obj["id"], "error.id")
        return ErrorMessage(message=_as_str(_get(obj, "message", "error"), "error.message"), id=message_id)
    raise ProtocolError(f"unknown message type {msg_type!r}", "$.type")
