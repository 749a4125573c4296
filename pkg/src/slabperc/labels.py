"""Edge label fields and the bond configurations obtained by thresholding them.

Labels come from a Philox stream keyed by ``(seed, stream)``; the label of
edge ``e`` is the ``e``-th double of that stream, so a field is a pure function
of the geometry and the two keys.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import GeometryError, SlabGeometry

MASK64 = (1 << 64) - 1
_DUMP_MAGIC = b"SLBL"
_DUMP_VERSION = 1
_HEADER = struct.Struct("<4sHxxqqqqqQQq")


def philox_generator(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & MASK64, int(stream) & MASK64]))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabelField:
    geometry: SlabGeometry
    labels: np.ndarray
    seed: int | None = None
    stream: int | None = None

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.float64)
        if lab.shape != (self.geometry.num_edges,):
            raise GeometryError(
                f"label array has shape {lab.shape}, geometry has {self.geometry.num_edges} edges"
            )
        object.__setattr__(self, "labels", _frozen(lab))

    def __getitem__(self, e):
        return self.labels[e]

    def edge_order(self) -> np.ndarray:
        """Edge ids sorted by (label, edge id): the strict total order on edges."""
        return np.lexsort((np.arange(len(self.labels)), self.labels))

    def rank(self) -> np.ndarray:
        """Position of every edge in :meth:`edge_order` (ties broken by id)."""
        r = np.empty(len(self.labels), dtype=np.int64)
        r[self.edge_order()] = np.arange(len(self.labels))
        return r

    def restrict(self, sub: SlabGeometry) -> "LabelField":
        return LabelField(sub, self.labels[self.geometry.edge_map_to(sub)], self.seed, self.stream)

    def replace(self, edges, values) -> "LabelField":
        lab = self.labels.copy()
        lab[np.asarray(edges, dtype=np.int64)] = values
        return LabelField(self.geometry, lab, self.seed, self.stream)

    def equals(self, other: "LabelField") -> bool:
        return self.geometry == other.geometry and np.array_equal(self.labels, other.labels)

    # -- binary dump ----------------------------------------------------------

    def dump(self, path: str | Path) -> None:
        g = self.geometry
        header = _HEADER.pack(
            _DUMP_MAGIC,
            _DUMP_VERSION,
            g.k,
            g.x0,
            g.x1,
            g.y0,
            g.y1,
            (self.seed if self.seed is not None else 0) & MASK64,
            (self.stream if self.stream is not None else 0) & MASK64,
            g.num_edges,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.labels.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "LabelField":
        raw = Path(path).read_bytes()
        magic, version, k, x0, x1, y0, y1, seed, stream, count = _HEADER.unpack_from(raw)
        if magic != _DUMP_MAGIC or version != _DUMP_VERSION:
            raise ValueError(f"{path}: not a label dump (magic={magic!r}, version={version})")
        g = SlabGeometry(k, x0, x1, y0, y1)
        if count != g.num_edges:
            raise ValueError(f"{path}: edge count {count} does not match geometry ({g.num_edges})")
        labels = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size)
        return cls(g, labels.astype(np.float64), seed, stream)


@dataclass(frozen=True, eq=False)
class BondConfig:
    geometry: SlabGeometry
    open: np.ndarray
    p: float | None = None

    def __post_init__(self):
        o = np.asarray(self.open, dtype=bool)
        if o.shape != (self.geometry.num_edges,):
            raise GeometryError(
                f"config has {o.shape} entries, geometry has {self.geometry.num_edges} edges"
            )
        object.__setattr__(self, "open", _frozen(o))

    @classmethod
    def from_edges(cls, g: SlabGeometry, edges: Iterable[int]) -> "BondConfig":
        o = np.zeros(g.num_edges, dtype=bool)
        o[np.fromiter(edges, dtype=np.int64)] = True
        return cls(g, o)

    @classmethod
    def all_open(cls, g: SlabGeometry) -> "BondConfig":
        return cls(g, np.ones(g.num_edges, dtype=bool), 1.0)

    @classmethod
    def all_closed(cls, g: SlabGeometry) -> "BondConfig":
        return cls(g, np.zeros(g.num_edges, dtype=bool), 0.0)

    def with_open(self, edges, value: bool = True) -> "BondConfig":
        o = self.open.copy()
        o[np.asarray(list(edges), dtype=np.int64)] = value
        return BondConfig(self.geometry, o)

    def restrict(self, sub: SlabGeometry) -> "BondConfig":
        return BondConfig(sub, self.open[self.geometry.edge_map_to(sub)], self.p)

    def open_edges(self) -> np.ndarray:
        return np.flatnonzero(self.open)


def sample_labels(g: SlabGeometry, seed: int, stream: int = 0) -> LabelField:
    """I.i.d. uniform [0, 1) labels, a deterministic function of ``(g, seed, stream)``."""
    rng = philox_generator(seed, stream)
    return LabelField(g, rng.random(g.num_edges), seed, stream)


def threshold(field: LabelField, p: float) -> BondConfig:
    """Open exactly the edges with label strictly below ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return BondConfig(field.geometry, field.labels < p, p)


def _edge_array(field: LabelField, edges) -> np.ndarray:
    e = np.unique(np.asarray(list(edges), dtype=np.int64))
    if e.size and (e.min() < 0 or e.max() >= field.geometry.num_edges):
        raise GeometryError("edge id outside geometry")
    return e


def affine_open(field: LabelField, edges, a: float) -> LabelField:
    """Lower the listed labels by ``w -> a*w``; each becomes ``a``-open."""
    if not 0.0 < a < 1.0:
        raise ValueError(f"affine_open needs a in (0, 1), got {a}")
    e = _edge_array(field, edges)
    return field.replace(e, a * field.labels[e])


def affine_close(field: LabelField, edges, b: float) -> LabelField:
    """Raise the listed labels by ``w -> b + (1-b)*w``; each becomes ``b``-closed."""
    if not 0.0 < b < 1.0:
        raise ValueError(f"affine_close needs b in (0, 1), got {b}")
    e = _edge_array(field, edges)
    return field.replace(e, b + (1.0 - b) * field.labels[e])
