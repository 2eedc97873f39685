"""Objective mathematics: embedding similarity, discriminator realness loss,
and direction normalization into the engine's all-minimized convention."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Direction",
    "ObjectiveId",
    "ObjectiveSpec",
    "Measurement",
    "PROB_EPS",
    "cosine_similarity",
    "discriminator_loss",
    "to_minimization",
    "assemble_objectives",
    "similarity_objective",
    "discriminator_objective",
    "custom_objective",
]

PROB_EPS = 1e-7  # probability clamp before log, keeps the loss finite


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


class ObjectiveId(str, Enum):
    SIMILARITY = "similarity"
    DISCRIMINATOR_LOSS = "discriminator_loss"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ObjectiveSpec:
    id: ObjectiveId
    direction: Direction
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.id is ObjectiveId.DISCRIMINATOR_LOSS:
            label = self.real_label
            if not 0.0 < label <= 1.0:
                raise ValueError(f"real_label must lie in (0, 1], got {label}")

    @property
    def real_label(self) -> float:
        return float(self.params.get("real_label", 1.0))

    def to_config(self) -> dict:
        cfg: dict = {"id": self.id.value, "direction": self.direction.value}
        if self.params:
            cfg["params"] = dict(self.params)
        return cfg

    @staticmethod
    def from_config(cfg: dict) -> "ObjectiveSpec":
        return ObjectiveSpec(
            id=ObjectiveId(cfg["id"]),
            direction=Direction(cfg["direction"]),
            params=dict(cfg.get("params", {})),
        )


def similarity_objective() -> ObjectiveSpec:
    return ObjectiveSpec(ObjectiveId.SIMILARITY, Direction.MAXIMIZE)


def discriminator_objective(real_label: float = 1.0) -> ObjectiveSpec:
    return ObjectiveSpec(
        ObjectiveId.DISCRIMINATOR_LOSS, Direction.MINIMIZE, {"real_label": real_label}
    )


def custom_objective(direction: Direction = Direction.MINIMIZE) -> ObjectiveSpec:
    return ObjectiveSpec(ObjectiveId.CUSTOM, direction)


@dataclass(frozen=True)
class Measurement:
    """Per-genome oracle output: an embedding plus optional realness score,
    or raw objective values, or an error marker."""

    embedding: Optional[np.ndarray] = None
    d_prob: Optional[float] = None
    objectives: Optional[np.ndarray] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine of the angle between two embeddings, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine similarity is undefined for a zero-norm embedding")
    return float(np.dot(a, b) / (norm_a * norm_b))


def discriminator_loss(d_prob: float, real_label: float = 1.0) -> float:
    """Binary cross-entropy between the realness probability and the label.

    The probability is clamped to [eps, 1-eps] before the logs so poisoned
    oracle outputs cannot produce infinities.
    """
    if not 0.0 <= d_prob <= 1.0:
        raise ValueError(f"d_prob must lie in [0, 1], got {d_prob}")
    if not 0.0 < real_label <= 1.0:
        raise ValueError(f"real_label must lie in (0, 1], got {real_label}")
    p = min(max(d_prob, PROB_EPS), 1.0 - PROB_EPS)
    return -(real_label * math.log(p) + (1.0 - real_label) * math.log(1.0 - p))


def to_minimization(spec: ObjectiveSpec, raw: float) -> float:
    """Map a raw objective value into the minimization convention."""
    if not math.isfinite(raw):
        raise ValueError(f"raw objective value must be finite, got {raw}")
    return -raw if spec.direction is Direction.MAXIMIZE else raw


def assemble_objectives(
    specs: Sequence[ObjectiveSpec],
    measurements: Sequence[Measurement],
    target: Optional[Sequence[float]],
) -> list[np.ndarray]:
    """Build one internal (minimized) objective vector per measurement.

    A measurement that carries an error, a non-finite or zero-norm
    embedding, a non-finite d_prob, or non-finite raw objective values
    yields an all-NaN vector for that entry alone; the engine maps those
    to its penalty constant and flags them.  Structural faults -- a
    missing target, a missing d_prob, a raw vector of the wrong length --
    raise, because no amount of penalizing makes the run meaningful.
    """
    if not specs:
        raise ValueError("at least one objective spec is required")
    needs_similarity = any(s.id is ObjectiveId.SIMILARITY for s in specs)
    if needs_similarity and target is None:
        raise ValueError("similarity objective requires a target embedding")
    target_arr = np.asarray(target, dtype=np.float64) if target is not None else None
    return [_assemble_one(specs, m, target_arr) for m in measurements]


def _assemble_one(
    specs: Sequence[ObjectiveSpec],
    m: Measurement,
    target_arr: Optional[np.ndarray],
) -> np.ndarray:
    poisoned = np.full(len(specs), np.nan)
    if m.failed:
        return poisoned
    if m.objectives is not None:
        raw = np.asarray(m.objectives, dtype=np.float64)
        if raw.shape != (len(specs),):
            raise ValueError(
                f"raw objective vector has shape {raw.shape}, expected ({len(specs)},)"
            )
        if not np.isfinite(raw).all():
            return poisoned
        return np.array(
            [to_minimization(spec, float(v)) for spec, v in zip(specs, raw)],
            dtype=np.float64,
        )
    if m.embedding is None:
        raise ValueError("measurement carries neither an embedding nor raw objectives")
    embedding = np.asarray(m.embedding, dtype=np.float64)
    values = np.empty(len(specs), dtype=np.float64)
    for k, spec in enumerate(specs):
        if spec.id is ObjectiveId.SIMILARITY:
            if embedding.shape != target_arr.shape:
                raise ValueError(
                    f"embedding shape {embedding.shape} does not match target "
                    f"shape {target_arr.shape}"
                )
            if not np.isfinite(embedding).all() or not np.linalg.norm(embedding):
                return poisoned
            raw_value = cosine_similarity(embedding, target_arr)
        elif spec.id is ObjectiveId.DISCRIMINATOR_LOSS:
            if m.d_prob is None:
                raise ValueError("discriminator objective requires d_prob in the measurement")
            if not math.isfinite(m.d_prob):
                return poisoned
            raw_value = discriminator_loss(m.d_prob, spec.real_label)
        else:
            raise ValueError(f"custom objective {spec.id} cannot be derived from an embedding")
        if not math.isfinite(raw_value):
            return poisoned
        values[k] = to_minimization(spec, raw_value)
    return values
