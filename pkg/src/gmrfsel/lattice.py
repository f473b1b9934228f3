"""Lattice geometry: toroidal norm, disc-shaped neighborhoods and edge sublattices.

Offsets are stored as signed pairs. On a torus every offset is reduced to
its representative in ``(-p/2, p/2]`` along each axis, so ``(19, 0)`` on a
20-periodic axis is stored as ``(-1, 0)``. Coefficient arrays elsewhere in
the package use the wrapped convention ``theta[i % p1, j % p2]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySublatticeError

Offset = tuple[int, int]


@dataclass(frozen=True)
class LatticeSpec:
    """A ``p1 x p2`` rectangular lattice, either a torus or a window of Z^2."""

    p1: int
    p2: int
    toroidal: bool = True

    def __post_init__(self):
        if int(self.p1) != self.p1 or int(self.p2) != self.p2:
            raise ValueError("lattice dimensions must be integers")
        if self.p1 < 2 or self.p2 < 2:
            raise ValueError(f"lattice must be at least 2x2, got {self.p1}x{self.p2}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.p1, self.p2)

    @property
    def size(self) -> int:
        return self.p1 * self.p2

    @property
    def square(self) -> bool:
        return self.p1 == self.p2

    def reduce(self, offset: Offset) -> Offset:
        """Signed representative of ``offset`` (identity on a non-toroidal lattice)."""
        i, j = int(offset[0]), int(offset[1])
        if not self.toroidal:
            return (i, j)
        return (_rep(i, self.p1), _rep(j, self.p2))

    def wrap(self, offset: Offset) -> tuple[int, int]:
        """Array index of ``offset`` in the wrapped coefficient convention."""
        return (int(offset[0]) % self.p1, int(offset[1]) % self.p2)

    def to_dict(self) -> dict:
        return {"p1": self.p1, "p2": self.p2, "toroidal": self.toroidal}


def _rep(i: int, p: int) -> int:
    i %= p
    return i if i <= p // 2 else i - p


def toroidal_norm(offset: Offset, lattice: LatticeSpec) -> float:
    """Toroidal norm ``|(i, j)|_t`` of an offset.

    >>> toroidal_norm((19, 0), LatticeSpec(20, 20))
    1.0
    """
    if not lattice.toroidal:
        raise ValueError("toroidal_norm requires a toroidal lattice")
    return math.sqrt(_sqnorm(offset, lattice))


def _sqnorm(offset: Offset, lattice: LatticeSpec) -> int:
    i, j = int(offset[0]), int(offset[1])
    if lattice.toroidal:
        i %= lattice.p1
        j %= lattice.p2
        i = min(i, lattice.p1 - i)
        j = min(j, lattice.p2 - j)
    return i * i + j * j


def _symmetry_images(offset: Offset, lattice: LatticeSpec, iso: bool) -> set[Offset]:
    """Orbit of ``offset`` under central symmetry, or the isotropy group if ``iso``."""
    i, j = offset
    if not iso:
        images = {(i, j), (-i, -j)}
    else:
        images = {(si * i, sj * j) for si in (1, -1) for sj in (1, -1)}
        # transposition is a lattice automorphism only for square tori (always on Z^2)
        if lattice.square or not lattice.toroidal:
            images |= {(b, a) for a, b in images}
    return {lattice.reduce(o) for o in images}


def _partition(offsets: Sequence[Offset], lattice: LatticeSpec, iso: bool) -> tuple:
    seen: set[Offset] = set()
    classes = []
    for o in offsets:
        if o in seen:
            continue
        orbit = _symmetry_images(o, lattice, iso)
        members = tuple(x for x in offsets if x in orbit)
        seen.update(members)
        classes.append(members)
    return tuple(classes)


@dataclass(frozen=True)
class NeighborhoodModel:
    """Disc-shaped neighborhood ``m`` with its symmetry classes.

    ``aniso_classes`` are the free parameters of a centrally symmetric
    coefficient matrix supported on ``m``; ``iso_classes`` those of an
    isotropic one.
    """

    radius: float
    offsets: tuple[Offset, ...]
    aniso_classes: tuple[tuple[Offset, ...], ...]
    iso_classes: tuple[tuple[Offset, ...], ...]
    lattice: LatticeSpec = field(repr=False, compare=False)

    @property
    def d_m(self) -> int:
        return len(self.aniso_classes)

    @property
    def d_m_iso(self) -> int:
        return len(self.iso_classes)

    def dim(self, iso: bool) -> int:
        return self.d_m_iso if iso else self.d_m

    def classes(self, iso: bool):
        return self.iso_classes if iso else self.aniso_classes

    @property
    def edge_extent(self) -> tuple[int, int]:
        """Largest reach of the neighborhood along rows and columns."""
        if not self.offsets:
            return (0, 0)
        return (max(abs(i) for i, _ in self.offsets), max(abs(j) for _, j in self.offsets))

    def __len__(self):
        return len(self.offsets)

    def __contains__(self, offset):
        return self.lattice.reduce(offset) in set(self.offsets)

    def issubset(self, other: "NeighborhoodModel") -> bool:
        return set(self.offsets) <= set(other.offsets)

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "offsets": [list(o) for o in self.offsets],
            "d_m": self.d_m,
            "d_m_iso": self.d_m_iso,
        }


def make_model(offsets: Iterable[Offset], lattice: LatticeSpec, radius: float = float("nan")):
    """Build a :class:`NeighborhoodModel` from an explicit offset set."""
    offs = sorted({lattice.reduce(o) for o in offsets} - {(0, 0)},
                  key=lambda o: (_sqnorm(o, lattice), o))
    offs = tuple(offs)
    return NeighborhoodModel(
        radius=radius,
        offsets=offs,
        aniso_classes=_partition(offs, lattice, iso=False),
        iso_classes=_partition(offs, lattice, iso=True),
        lattice=lattice,
    )


def _candidate_offsets(lattice: LatticeSpec) -> list[Offset]:
    if lattice.toroidal:
        return [lattice.reduce((i, j)) for i in range(lattice.p1) for j in range(lattice.p2)
                if (i, j) != (0, 0)]
    e = min((lattice.p1 - 1) // 2, (lattice.p2 - 1) // 2)
    # largest disc whose edge sublattice is nonempty has floor(radius) <= e
    return [(i, j) for i in range(-e, e + 1) for j in range(-e, e + 1)
            if (i, j) != (0, 0) and i * i + j * j < (e + 1) ** 2]


def build_model_collection(lattice: LatticeSpec, max_dim: int, iso: bool = True):
    """Ordered collection ``m0 ⊂ m1 ⊂ ...`` of disc models with dimension <= ``max_dim``.

    ``m0`` is the empty neighborhood. Each subsequent model is the set of
    offsets whose (toroidal) norm is at most one of the realized distances,
    so consecutive models always differ.

    Raises
    ------
    ValueError
        If ``max_dim`` exceeds the dimension of the largest admissible disc
        (the whole torus, or the largest disc fitting inside the window).
    """
    if max_dim < 0:
        raise ValueError("max_dim must be nonnegative")
    cands = _candidate_offsets(lattice)
    sq = np.array([_sqnorm(o, lattice) for o in cands])
    full = make_model(cands, lattice)
    if max_dim > full.dim(iso):
        raise ValueError(
            f"max_dim={max_dim} exceeds the dimension {full.dim(iso)} of the largest model")
    models = [make_model([], lattice, radius=0.0)]
    for r2 in np.unique(sq):
        m = make_model([o for o, s in zip(cands, sq) if s <= r2], lattice, radius=math.sqrt(r2))
        if m.dim(iso) > max_dim:
            break
        models.append(m)
    return models


def collection_to_json(models: Sequence[NeighborhoodModel]) -> str:
    return json.dumps([m.to_dict() for m in models])


def collection_from_json(text: str, lattice: LatticeSpec):
    return [make_model([tuple(o) for o in d["offsets"]], lattice, radius=d["radius"])
            for d in json.loads(text)]


@dataclass(frozen=True, eq=False)
class Sublattice:
    """A subset ``Λ'`` of the window's nodes, stored as a boolean mask."""

    mask: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return np.argwhere(self.mask)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def __len__(self):
        return self.size

    def issubset(self, other: "Sublattice") -> bool:
        return bool(np.all(other.mask[self.mask]))

    @classmethod
    def rectangle(cls, lattice: LatticeSpec, rows: tuple[int, int], cols: tuple[int, int]):
        mask = np.zeros(lattice.shape, dtype=bool)
        mask[rows[0]:rows[1], cols[0]:cols[1]] = True
        return cls(mask)


def sublattice_for_model(m: NeighborhoodModel, lattice: LatticeSpec) -> Sublattice:
    """Nodes of the window whose whole ``m``-neighborhood lies inside the window."""
    if lattice.toroidal:
        raise ValueError("edge sublattices are only defined on non-toroidal lattices")
    e1, e2 = m.edge_extent
    if 2 * e1 >= lattice.p1 or 2 * e2 >= lattice.p2:
        raise EmptySublatticeError(
            f"model with radius {m.radius:.3g} does not fit in a {lattice.p1}x{lattice.p2} window")
    return Sublattice.rectangle(lattice, (e1, lattice.p1 - e1), (e2, lattice.p2 - e2))
