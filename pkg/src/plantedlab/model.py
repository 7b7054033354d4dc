"""Placements, templates and the finite-template generative model.

Indices are 0-based throughout: an ``n x n`` matrix has rows and columns
``0..n-1`` and a block's template coordinates run over ``0..k-1``.

A block stores its row and column indices in *template order*, so that
``X[np.ix_(block.rows, block.cols)]`` lines up entry-for-entry with a
``k x k`` template.  For non-consecutive and standard consecutive blocks this
is increasing order; for circular blocks it is cyclic order starting at the
block origin, which keeps a wrapped template contiguous.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import BudgetExceededError, ConfigurationError

MAX_PLACEMENT_ATTEMPTS = 10_000


class Placement(str, enum.Enum):
    NONCON = "noncon"
    CON = "con"
    CIRC = "circ"

    @classmethod
    def parse(cls, value: "Placement | str") -> "Placement":
        if isinstance(value, cls):
            return value
        aliases = {
            "noncon": cls.NONCON, "non-consecutive": cls.NONCON, "nonconsecutive": cls.NONCON,
            "con": cls.CON, "consecutive": cls.CON,
            "circ": cls.CIRC, "circular": cls.CIRC,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigurationError(f"unknown placement family {value!r}") from None


class Kind(str, enum.Enum):
    MEAN = "mean"
    VARIANCE = "variance"

    @classmethod
    def parse(cls, value: "Kind | str") -> "Kind":
        if isinstance(value, cls):
            return value
        aliases = {"mean": cls.MEAN, "meanshift": cls.MEAN, "mean-shift": cls.MEAN,
                   "variance": cls.VARIANCE, "varianceshift": cls.VARIANCE,
                   "variance-shift": cls.VARIANCE, "var": cls.VARIANCE}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigurationError(f"unknown template kind {value!r}") from None


class Hypothesis(str, enum.Enum):
    H0 = "H0"
    H1 = "H1"


@dataclass(frozen=True)
class Dimensions:
    n: int
    k: int
    m: int

    def __post_init__(self):
        for name in ("n", "k", "m"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.k > self.n:
            raise ConfigurationError(f"block side k={self.k} exceeds n={self.n}")
        if self.m * self.k ** 2 > self.n ** 2:
            raise ConfigurationError(
                f"m*k^2 = {self.m * self.k ** 2} planted entries do not fit in n^2 = {self.n ** 2}")


@dataclass(frozen=True)
class PlacementConfig:
    dims: Dimensions
    placement: Placement

    def __post_init__(self):
        object.__setattr__(self, "placement", Placement.parse(self.placement))

    @classmethod
    def of(cls, n: int, k: int, m: int, placement: Placement | str) -> "PlacementConfig":
        return cls(Dimensions(n, k, m), Placement.parse(placement))

    @property
    def n(self) -> int:
        return self.dims.n

    @property
    def k(self) -> int:
        return self.dims.k

    @property
    def m(self) -> int:
        return self.dims.m

    def check_samplable(self):
        if self.placement is not Placement.NONCON and self.m * self.k > self.n:
            raise ConfigurationError(
                f"consecutive placements need m*k <= n (got m*k = {self.m * self.k}, n = {self.n})")


@dataclass(frozen=True)
class Block:
    """A ``k x k`` index set ``rows x cols`` with rows and cols in template order."""

    rows: tuple[int, ...]
    cols: tuple[int, ...]
    origin: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))
        object.__setattr__(self, "cols", tuple(int(c) for c in self.cols))
        if len(self.rows) != len(self.cols):
            raise ConfigurationError("block rows and cols must have equal length")
        if len(set(self.rows)) != len(self.rows) or len(set(self.cols)) != len(self.cols):
            raise ConfigurationError("block rows and cols must not repeat")

    @classmethod
    def arbitrary(cls, rows: Sequence[int], cols: Sequence[int]) -> "Block":
        return cls(tuple(sorted(rows)), tuple(sorted(cols)))

    @classmethod
    def consecutive(cls, row_start: int, col_start: int, k: int) -> "Block":
        return cls(tuple(range(row_start, row_start + k)),
                   tuple(range(col_start, col_start + k)), (row_start, col_start))

    @classmethod
    def circular(cls, row_start: int, col_start: int, k: int, n: int) -> "Block":
        return cls(tuple((row_start + t) % n for t in range(k)),
                   tuple((col_start + t) % n for t in range(k)), (row_start, col_start))

    @property
    def k(self) -> int:
        return len(self.rows)

    @property
    def index(self):
        """Fancy index selecting the block in template order."""
        return np.ix_(self.rows, self.cols)

    def __contains__(self, entry) -> bool:
        i, j = entry
        return i in self.rows and j in self.cols

    def entries(self) -> set[tuple[int, int]]:
        return {(i, j) for i in self.rows for j in self.cols}

    def intersects(self, other: "Block") -> bool:
        # S x T and S' x T' meet iff both the row sets and the column sets meet.
        return not set(self.rows).isdisjoint(other.rows) and not set(self.cols).isdisjoint(other.cols)

    def wraps(self, n: int) -> bool:
        """True for a circular block whose rows or cols pass from n-1 back to 0."""
        return any(b < a for a, b in zip(self.rows, self.rows[1:])) or \
            any(b < a for a, b in zip(self.cols, self.cols[1:]))

    def to_json(self) -> dict:
        if self.origin is not None:
            return {"row_start": self.origin[0], "col_start": self.origin[1]}
        return {"rows": list(self.rows), "cols": list(self.cols)}


def coordinate_map(block: Block, i: int, j: int) -> tuple[int, int]:
    """Relative (row, col) template coordinate of entry ``(i, j)`` inside ``block``."""
    try:
        return block.rows.index(i), block.cols.index(j)
    except ValueError:
        raise ValueError(f"entry outside block: ({i}, {j})") from None


def count_blocks(placement: Placement | str, n: int, k: int) -> int:
    placement = Placement.parse(placement)
    if placement is Placement.NONCON:
        return math.comb(n, k) ** 2
    if placement is Placement.CON:
        return (n - k + 1) ** 2
    return n ** 2


def candidate_blocks(placement: Placement | str, n: int, k: int) -> Iterator[Block]:
    """All blocks of a placement family, in the canonical scan order.

    Consecutive and circular blocks come in row-major order of their origin;
    non-consecutive blocks in lexicographic order of ``(rows, cols)``.
    """
    placement = Placement.parse(placement)
    if placement is Placement.NONCON:
        subsets = list(itertools.combinations(range(n), k))
        for rows in subsets:
            for cols in subsets:
                yield Block(rows, cols)
    elif placement is Placement.CON:
        for i in range(n - k + 1):
            for j in range(n - k + 1):
                yield Block.consecutive(i, j, k)
    else:
        for i in range(n):
            for j in range(n):
                yield Block.circular(i, j, k, n)


@dataclass(frozen=True, eq=False)
class TemplateFamily:
    """m templates of shape k x k plus the model kind.

    ``theta0`` bounds the variance templates and must be below 1.  When not
    supplied for a variance family it defaults to the largest entry.
    """

    kind: Kind
    templates: np.ndarray
    theta0: float | None = None

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        templates = np.array(self.templates, dtype=np.float64)
        if templates.ndim == 2:
            templates = templates[None]
        if templates.ndim != 3 or templates.shape[1] != templates.shape[2] or templates.shape[0] < 1:
            raise ConfigurationError(f"templates must have shape (m, k, k), got {templates.shape}")
        if not np.all(np.isfinite(templates)):
            raise ConfigurationError("templates must be finite")
        theta0 = self.theta0
        if kind is Kind.VARIANCE:
            if theta0 is None:
                theta0 = float(templates.max())
            if not 0.0 <= theta0 < 1.0:
                raise ConfigurationError(f"theta0 must lie in [0, 1), got {theta0}")
            if templates.min() < 0 or templates.max() > theta0:
                raise ConfigurationError("variance template entries must lie in [0, theta0]")
        templates.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "templates", templates)
        object.__setattr__(self, "theta0", None if theta0 is None else float(theta0))

    def __eq__(self, other):
        if not isinstance(other, TemplateFamily):
            return NotImplemented
        return (self.kind is other.kind and self.theta0 == other.theta0
                and np.array_equal(self.templates, other.templates))

    @property
    def m(self) -> int:
        return self.templates.shape[0]

    @property
    def k(self) -> int:
        return self.templates.shape[1]

    @property
    def mu_det(self) -> float:
        """Total planted mean mass (mean-shift families)."""
        return float(self.templates.sum())

    @property
    def nu_det(self) -> float:
        """Total planted variance mass (variance-shift families)."""
        return float(self.templates.sum())

    def check_dims(self, dims: Dimensions):
        if self.m != dims.m or self.k != dims.k:
            raise ConfigurationError(
                f"template family has m={self.m}, k={self.k}; configuration expects "
                f"m={dims.m}, k={dims.k}")

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "theta0": self.theta0,
                "templates": self.templates.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "TemplateFamily":
        try:
            return cls(doc["kind"], doc["templates"], doc.get("theta0"))
        except KeyError as exc:
            raise ConfigurationError(f"template family JSON lacks field {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def load(cls, path) -> "TemplateFamily":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PlantedInstance:
    """m disjoint blocks; ``labels[b]`` is the template index carried by ``blocks[b]``."""

    placement: Placement
    n: int
    k: int
    blocks: tuple[Block, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "placement", Placement.parse(self.placement))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        if sorted(self.labels) != list(range(len(self.blocks))):
            raise ConfigurationError("labels must be a permutation of range(m)")
        for a, b in itertools.combinations(self.blocks, 2):
            if a.intersects(b):
                raise ConfigurationError("planted blocks must be pairwise disjoint")

    @property
    def m(self) -> int:
        return len(self.blocks)

    def block_for(self, label: int) -> Block:
        return self.blocks[self.labels.index(label)]

    def to_json(self) -> dict:
        return {"family": self.placement.value, "n": self.n, "k": self.k,
                "blocks": [b.to_json() for b in self.blocks], "labels": list(self.labels)}

    @classmethod
    def from_json(cls, doc: dict) -> "PlantedInstance":
        placement = Placement.parse(doc["family"])
        n, k = doc["n"], doc["k"]
        blocks = []
        for b in doc["blocks"]:
            if "rows" in b:
                blocks.append(Block.arbitrary(b["rows"], b["cols"]))
            elif placement is Placement.CIRC:
                blocks.append(Block.circular(b["row_start"], b["col_start"], k, n))
            else:
                blocks.append(Block.consecutive(b["row_start"], b["col_start"], k))
        return cls(placement, n, k, tuple(blocks), tuple(doc["labels"]))


@dataclass(frozen=True, eq=False)
class Observation:
    data: np.ndarray
    hypothesis: Hypothesis
    instance: PlantedInstance | None = None
    seed: object = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ConfigurationError(f"observation must be square, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "hypothesis", Hypothesis(self.hypothesis))

    @property
    def n(self) -> int:
        return self.data.shape[0]


def make_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stream_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` (e.g. hypothesis, trial) under a master seed.

    Streams depend only on ``(master_seed, key)``, never on the order in
    which they are created, so results do not depend on worker count.
    """
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.PCG64(seq))


def random_block(placement: Placement, n: int, k: int, rng: np.random.Generator) -> Block:
    """One block drawn uniformly from the given placement family."""
    if placement is Placement.NONCON:
        rows = rng.choice(n, size=k, replace=False)
        cols = rng.choice(n, size=k, replace=False)
        return Block.arbitrary(rows, cols)
    if placement is Placement.CON:
        i, j = rng.integers(0, n - k + 1, size=2)
        return Block.consecutive(int(i), int(j), k)
    i, j = rng.integers(0, n, size=2)
    return Block.circular(int(i), int(j), k, n)


def sample_placement(config: PlacementConfig, rng=None,
                     max_attempts: int = MAX_PLACEMENT_ATTEMPTS) -> PlantedInstance:
    """Uniform disjoint block collection with a uniform labelling.

    Draws m blocks i.i.d. uniformly and rejects the whole tuple when any two
    overlap, which is exactly uniform on ordered disjoint tuples.
    """
    config.check_samplable()
    rng = make_rng(rng)
    n, k, m = config.n, config.k, config.m
    for _ in range(max_attempts):
        blocks = [random_block(config.placement, n, k, rng) for _ in range(m)]
        if not any(a.intersects(b) for a, b in itertools.combinations(blocks, 2)):
            labels = rng.permutation(m)
            return PlantedInstance(config.placement, n, k, tuple(blocks), tuple(labels))
    raise BudgetExceededError(
        f"placement sampling failed: density too high ({max_attempts} attempts)")


def plant(data: np.ndarray, instance: PlantedInstance, family: TemplateFamily) -> None:
    """Apply the planted signal in place to a standard normal matrix."""
    for block, label in zip(instance.blocks, instance.labels):
        template = family.templates[label]
        if family.kind is Kind.MEAN:
            data[block.index] += template
        else:
            data[block.index] *= np.sqrt(1.0 + template)


def generate(config: PlacementConfig, family: TemplateFamily | None,
             hypothesis: Hypothesis | str, rng=None) -> Observation:
    """Draw an observation under H0 (i.i.d. N(0,1)) or under the planted model."""
    hypothesis = Hypothesis(hypothesis)
    seed = rng if isinstance(rng, (int, type(None))) else None
    rng = make_rng(rng)
    n = config.n
    if hypothesis is Hypothesis.H0:
        return Observation(rng.standard_normal((n, n)), hypothesis, None, seed)
    if family is None:
        raise ConfigurationError("H1 generation needs a template family")
    family.check_dims(config.dims)
    instance = sample_placement(config, rng)
    data = rng.standard_normal((n, n))
    plant(data, instance, family)
    return Observation(data, hypothesis, instance, seed)


_HEADER = struct.Struct("<qq")


def write_matrix(path, data: np.ndarray) -> None:
    """Binary dump: two little-endian int64 (rows, cols), then float64 row-major."""
    data = np.asarray(data, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*data.shape))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigurationError(f"{path}: truncated matrix header")
    rows, cols = _HEADER.unpack_from(raw)
    body = raw[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise ConfigurationError(f"{path}: expected {rows}x{cols} float64 payload")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)
