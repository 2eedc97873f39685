"""Mixed-variable latent spaces and the genetic operators acting on them.

A latent space is an ordered list of blocks (boolean, real, integer); a
genome is one flat float64 vector laid out block by block.  All operators
are pure functions of their inputs and an explicit numpy Generator, so a
seed fully determines every trajectory.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional

import numpy as np

__all__ = [
    "BlockKind",
    "BlockSpec",
    "LatentSpaceSpec",
    "OperatorParams",
    "GenomeViolation",
    "preset_space",
    "sample",
    "mutate",
    "crossover",
    "validate",
    "check",
]

GPT2_VOCAB_MAX = 50256  # BPE vocabulary ids are 0..50256 inclusive
GPT2_DEFAULT_CONTEXT = 20


class BlockKind(str, Enum):
    BOOLEAN = "boolean"
    REAL = "real"
    INTEGER = "integer"


@dataclass(frozen=True)
class BlockSpec:
    """One homogeneous run of genes.

    Real blocks carry a sampling distribution (normal or truncated normal
    with inclusive bounds); integer blocks carry an inclusive range.
    """

    kind: BlockKind
    length: int
    mean: float = 0.0
    stddev: float = 1.0
    lower: Optional[float] = None  # real bounds, or integer range low
    upper: Optional[float] = None

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise ValueError(f"block length must be positive, got {self.length}")
        if self.kind is BlockKind.REAL:
            if not np.isfinite(self.mean):
                raise ValueError("real block mean must be finite")
            if not (self.stddev > 0 and np.isfinite(self.stddev)):
                raise ValueError("real block stddev must be positive and finite")
            if (self.lower is None) != (self.upper is None):
                raise ValueError("real bounds must be given as a [lo, hi] pair or not at all")
            if self.lower is not None and not self.lower < self.upper:
                raise ValueError(f"real bounds need lo < hi, got [{self.lower}, {self.upper}]")
        elif self.kind is BlockKind.INTEGER:
            if self.lower is None or self.upper is None:
                raise ValueError("integer block requires an inclusive [lo, hi] range")
            if self.lower != int(self.lower) or self.upper != int(self.upper):
                raise ValueError("integer range bounds must be whole numbers")
            if not self.lower <= self.upper:
                raise ValueError(f"integer range needs lo <= hi, got [{self.lower}, {self.upper}]")

    @property
    def bounded(self) -> bool:
        return self.lower is not None

    @staticmethod
    def booleans(length: int) -> "BlockSpec":
        return BlockSpec(BlockKind.BOOLEAN, length)

    @staticmethod
    def reals(
        length: int,
        mean: float = 0.0,
        stddev: float = 1.0,
        bounds: Optional[tuple[float, float]] = None,
    ) -> "BlockSpec":
        lo, hi = bounds if bounds is not None else (None, None)
        return BlockSpec(BlockKind.REAL, length, mean=mean, stddev=stddev, lower=lo, upper=hi)

    @staticmethod
    def integers(length: int, lo: int, hi: int) -> "BlockSpec":
        return BlockSpec(BlockKind.INTEGER, length, lower=float(lo), upper=float(hi))

    def to_config(self) -> dict:
        cfg: dict = {"kind": self.kind.value, "length": self.length}
        if self.kind is BlockKind.REAL:
            cfg["mean"] = self.mean
            cfg["stddev"] = self.stddev
            if self.bounded:
                cfg["bounds"] = [self.lower, self.upper]
        elif self.kind is BlockKind.INTEGER:
            cfg["range"] = [int(self.lower), int(self.upper)]
        return cfg

    @staticmethod
    def from_config(cfg: dict) -> "BlockSpec":
        kind = BlockKind(cfg["kind"])
        if kind is BlockKind.BOOLEAN:
            return BlockSpec.booleans(int(cfg["length"]))
        if kind is BlockKind.REAL:
            bounds = cfg.get("bounds")
            return BlockSpec.reals(
                int(cfg["length"]),
                mean=float(cfg.get("mean", 0.0)),
                stddev=float(cfg.get("stddev", 1.0)),
                bounds=tuple(bounds) if bounds is not None else None,
            )
        lo, hi = cfg["range"]
        return BlockSpec.integers(int(cfg["length"]), int(lo), int(hi))


@dataclass(frozen=True)
class LatentSpaceSpec:
    """Ordered block layout of a genome.  Order is significant."""

    blocks: tuple[BlockSpec, ...]

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ValueError("latent space needs at least one block")
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def total_dim(self) -> int:
        return sum(b.length for b in self.blocks)

    def slices(self) -> Iterator[tuple[BlockSpec, slice]]:
        """Yield each block with its slice into the flat genome."""
        offset = 0
        for block in self.blocks:
            yield block, slice(offset, offset + block.length)
            offset += block.length

    def fingerprint(self) -> str:
        """Stable content hash of the layout, shared with external oracles.

        Numbers are hashed as big-endian IEEE-754 doubles so any language
        with a float64 type reproduces the digest without string-formatting
        pitfalls.
        """
        h = hashlib.sha256()
        for block in self.blocks:
            h.update(block.kind.value.encode("ascii") + b"\x00")
            h.update(struct.pack(">d", float(block.length)))
            if block.kind is BlockKind.REAL:
                bounded = 1.0 if block.bounded else 0.0
                lo = block.lower if block.bounded else 0.0
                hi = block.upper if block.bounded else 0.0
                h.update(struct.pack(">5d", block.mean, block.stddev, bounded, lo, hi))
            elif block.kind is BlockKind.INTEGER:
                h.update(struct.pack(">2d", block.lower, block.upper))
        return h.hexdigest()

    def to_config(self) -> dict:
        return {"blocks": [b.to_config() for b in self.blocks]}

    @staticmethod
    def from_config(cfg: dict) -> "LatentSpaceSpec":
        return LatentSpaceSpec(tuple(BlockSpec.from_config(b) for b in cfg["blocks"]))


@dataclass(frozen=True)
class OperatorParams:
    """Variation operator rates.

    ``mutation_prob_per_gene=None`` resolves to 1/total_dim at use.  The
    real mutation step is ``real_mutation_sigma`` times the bound width for
    bounded real blocks, times the block stddev otherwise.
    """

    mutation_prob_per_gene: Optional[float] = None
    real_mutation_sigma: float = 0.1
    crossover_prob: float = 0.9

    def __post_init__(self) -> None:
        if self.mutation_prob_per_gene is not None and not 0.0 <= self.mutation_prob_per_gene <= 1.0:
            raise ValueError("mutation_prob_per_gene must lie in [0, 1]")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if not self.real_mutation_sigma > 0:
            raise ValueError("real_mutation_sigma must be positive")

    def effective_mutation_prob(self, spec: LatentSpaceSpec) -> float:
        if self.mutation_prob_per_gene is not None:
            return self.mutation_prob_per_gene
        return 1.0 / spec.total_dim

    def to_config(self) -> dict:
        return {
            "mutation_prob_per_gene": self.mutation_prob_per_gene,
            "real_mutation_sigma": self.real_mutation_sigma,
            "crossover_prob": self.crossover_prob,
        }

    @staticmethod
    def from_config(cfg: dict) -> "OperatorParams":
        return OperatorParams(
            mutation_prob_per_gene=cfg.get("mutation_prob_per_gene"),
            real_mutation_sigma=float(cfg.get("real_mutation_sigma", 0.1)),
            crossover_prob=float(cfg.get("crossover_prob", 0.9)),
        )


@dataclass(frozen=True)
class GenomeViolation:
    """First constraint breach found by :func:`validate`."""

    index: int
    constraint: str

    def __str__(self) -> str:
        return f"gene {self.index}: {self.constraint}"


def preset_space(name: str) -> LatentSpaceSpec:
    """Return one of the built-in generator latent spaces.

    ``biggan``: 1000 booleans (class flags) followed by 128 reals drawn from
    a truncated normal on [-2, 2].  ``stylegan2``: 512 unbounded standard
    normal reals.  ``gpt2`` or ``gpt2:N``: N context token ids (default 20)
    in [0, 50256].
    """
    key = name.strip().lower()
    if key == "biggan":
        return LatentSpaceSpec(
            (
                BlockSpec.booleans(1000),
                BlockSpec.reals(128, mean=0.0, stddev=1.0, bounds=(-2.0, 2.0)),
            )
        )
    if key == "stylegan2":
        return LatentSpaceSpec((BlockSpec.reals(512, mean=0.0, stddev=1.0),))
    if key == "gpt2" or key.startswith("gpt2:"):
        n_ctx = GPT2_DEFAULT_CONTEXT
        if ":" in key:
            try:
                n_ctx = int(key.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad gpt2 context length in preset name {name!r}") from None
            if n_ctx <= 0:
                raise ValueError("gpt2 context length must be positive")
        return LatentSpaceSpec((BlockSpec.integers(n_ctx, 0, GPT2_VOCAB_MAX),))
    raise ValueError(f"unknown preset {name!r}; expected biggan, stylegan2, or gpt2[:N]")


def sample(spec: LatentSpaceSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one genome from the space's sampling distributions.

    Truncated real blocks use rejection resampling, so the marginal is the
    exact truncated normal rather than a clipped one.
    """
    genome = np.empty(spec.total_dim, dtype=np.float64)
    for block, sl in spec.slices():
        if block.kind is BlockKind.BOOLEAN:
            genome[sl] = rng.integers(0, 2, size=block.length).astype(np.float64)
        elif block.kind is BlockKind.INTEGER:
            genome[sl] = rng.integers(int(block.lower), int(block.upper) + 1, size=block.length).astype(np.float64)
        else:
            values = block.mean + block.stddev * rng.standard_normal(block.length)
            if block.bounded:
                bad = (values < block.lower) | (values > block.upper)
                while bad.any():
                    redraw = block.mean + block.stddev * rng.standard_normal(int(bad.sum()))
                    values[bad] = redraw
                    bad = (values < block.lower) | (values > block.upper)
            genome[sl] = values
    return genome


def mutate(
    spec: LatentSpaceSpec,
    genome: np.ndarray,
    params: OperatorParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mutate each gene independently with the per-gene probability.

    Booleans flip, reals take an additive Gaussian step (clamped back into
    bounded blocks), integers are resampled uniformly over their range.
    Draw counts are fixed per block so the stream advance does not depend
    on which genes the mask selects.
    """
    _require_match(spec, genome)
    prob = params.effective_mutation_prob(spec)
    out = genome.copy()
    if prob == 0.0:
        return out
    for block, sl in spec.slices():
        mask = rng.random(block.length) < prob
        current = out[sl]
        if block.kind is BlockKind.BOOLEAN:
            mutated = 1.0 - current
        elif block.kind is BlockKind.INTEGER:
            mutated = rng.integers(int(block.lower), int(block.upper) + 1, size=block.length).astype(np.float64)
        else:
            scale = (
                params.real_mutation_sigma * (block.upper - block.lower)
                if block.bounded
                else params.real_mutation_sigma * block.stddev
            )
            mutated = current + scale * rng.standard_normal(block.length)
            if block.bounded:
                mutated = np.clip(mutated, block.lower, block.upper)
        out[sl] = np.where(mask, mutated, current)
    return out


def crossover(
    spec: LatentSpaceSpec,
    a: np.ndarray,
    b: np.ndarray,
    params: OperatorParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform crossover over all block kinds.

    With probability ``crossover_prob`` each gene position is swapped
    between the children with probability 0.5; otherwise the children are
    plain copies.  Either way the pair conserves the per-position multiset
    of parent genes.
    """
    _require_match(spec, a)
    _require_match(spec, b)
    do_cross = rng.random() < params.crossover_prob
    swap = rng.random(spec.total_dim) < 0.5  # drawn unconditionally: fixed stream advance
    if not do_cross:
        return a.copy(), b.copy()
    child_a = np.where(swap, b, a)
    child_b = np.where(swap, a, b)
    return child_a, child_b


def validate(spec: LatentSpaceSpec, genome: np.ndarray) -> Optional[GenomeViolation]:
    """Return None if the genome satisfies every block constraint.

    Otherwise report the first offending gene index and the constraint it
    breaks.
    """
    genome = np.asarray(genome, dtype=np.float64)
    if genome.ndim != 1 or genome.shape[0] != spec.total_dim:
        return GenomeViolation(0, f"genome length {genome.shape} does not match total_dim {spec.total_dim}")
    if not np.isfinite(genome).all():
        idx = int(np.flatnonzero(~np.isfinite(genome))[0])
        return GenomeViolation(idx, "gene is not finite")
    for block, sl in spec.slices():
        values = genome[sl]
        if block.kind is BlockKind.BOOLEAN:
            bad = ~np.isin(values, (0.0, 1.0))
            constraint = "boolean gene must be 0 or 1"
        elif block.kind is BlockKind.INTEGER:
            bad = (values != np.floor(values)) | (values < block.lower) | (values > block.upper)
            constraint = f"integer gene must be whole and within [{int(block.lower)}, {int(block.upper)}]"
        else:
            if block.bounded:
                bad = (values < block.lower) | (values > block.upper)
                constraint = f"real gene must lie within [{block.lower}, {block.upper}]"
            else:
                continue  # finiteness already checked
        if bad.any():
            local = int(np.flatnonzero(bad)[0])
            return GenomeViolation(sl.start + local, constraint)
    return None


def check(spec: LatentSpaceSpec, genome: np.ndarray) -> None:
    """Raise ValueError when the genome violates the space."""
    violation = validate(spec, genome)
    if violation is not None:
        raise ValueError(str(violation))


def _require_match(spec: LatentSpaceSpec, genome: np.ndarray) -> None:
    if genome.ndim != 1 or genome.shape[0] != spec.total_dim:
        raise ValueError(
            f"genome of length {genome.shape} does not fit space with total_dim {spec.total_dim}"
        )
