"""Dense fields on the centred box [-R, R]^d of Z^d.

Values live in a d-dimensional numpy array whose axis ``i`` is coordinate
``x_{i+1}`` shifted by ``R``.  Reads outside the box return 0; every field
in this package is compactly supported and the box is grown before any
write could leave it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidConfig

Site = tuple[int, ...]


@dataclass(frozen=True)
class Direction:
    axis: int
    sign: int

    def vector(self, d: int) -> Site:
        e = [0] * d
        e[self.axis] = self.sign
        return tuple(e)


def directions(d: int) -> list[Direction]:
    """The 2d unit directions, axis ascending, minus before plus."""
    return [Direction(axis, sign) for axis in range(d) for sign in (-1, 1)]


def neighbors(x: Sequence[int], d: int | None = None) -> list[Site]:
    d = len(x) if d is None else d
    out = []
    for e in directions(d):
        y = list(x)
        y[e.axis] += e.sign
        out.append(tuple(y))
    return out


@dataclass
class LatticeField:
    """Real (or boolean) field on [-radius, radius]^dim."""

    dim: int
    radius: int
    values: np.ndarray

    @classmethod
    def zeros(cls, dim: int, radius: int, dtype=np.float64) -> "LatticeField":
        if dim < 2:
            raise InvalidConfig(f"dimension must be at least 2, got {dim}")
        if radius < 0:
            raise InvalidConfig(f"radius must be non-negative, got {radius}")
        side = 2 * radius + 1
        return cls(dim, radius, np.zeros((side,) * dim, dtype=dtype))

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    def inside(self, x: Sequence[int]) -> bool:
        return len(x) == self.dim and all(-self.radius <= c <= self.radius for c in x)

    def index(self, x: Sequence[int]) -> tuple[int, ...]:
        return tuple(c + self.radius for c in x)

    def __getitem__(self, x: Sequence[int]):
        if not self.inside(x):
            return self.values.dtype.type(0)
        return self.values[self.index(x)]

    def __setitem__(self, x: Sequence[int], value) -> None:
        if not self.inside(x):
            raise IndexError(f"site {tuple(x)} outside box of radius {self.radius}")
        self.values[self.index(x)] = value

    def copy(self) -> "LatticeField":
        return LatticeField(self.dim, self.radius, self.values.copy())

    def sites(self, mask: np.ndarray | None = None) -> np.ndarray:
        """Integer coordinates (k, d) of all sites, or of those where ``mask`` holds."""
        if mask is None:
            mask = np.ones(self.values.shape, dtype=bool)
        return np.argwhere(mask) - self.radius

    def coordinate_grids(self) -> list[np.ndarray]:
        r = np.arange(-self.radius, self.radius + 1)
        return list(np.meshgrid(*([r] * self.dim), indexing="ij", sparse=True))

    def norm2_squared(self) -> np.ndarray:
        """|x|^2 at every site of the box (broadcast-friendly)."""
        return sum(g.astype(np.float64) ** 2 for g in self.coordinate_grids())

    def __iter__(self) -> Iterator[Site]:
        for idx in np.ndindex(*self.values.shape):
            yield tuple(i - self.radius for i in idx)


def shift_sum(values: np.ndarray) -> np.ndarray:
    """Sum of the 2d neighbour values at every site, zero beyond the array.

    Contributions are added in the fixed order axis ascending, minus before
    plus, so the result is bit-reproducible regardless of how the array is
    tiled by the caller.
    """
    out = np.zeros_like(values, dtype=np.float64)
    d = values.ndim
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        # neighbour x - e_axis
        lo[axis] = slice(1, None)
        hi[axis] = slice(None, -1)
        out[tuple(lo)] += values[tuple(hi)]
        # neighbour x + e_axis
        out[tuple(hi)] += values[tuple(lo)]
    return out


def laplacian_array(values: np.ndarray) -> np.ndarray:
    """Normalised Laplacian (1/2d) sum_{y~x} (f(y) - f(x)) over the whole box."""
    d = values.ndim
    return shift_sum(values) / (2 * d) - values


def dilate(mask: np.ndarray) -> np.ndarray:
    """``mask`` together with all lattice neighbours of its sites (clipped to the box)."""
    out = mask.copy()
    d = mask.ndim
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(1, None)
        hi[axis] = slice(None, -1)
        out[tuple(lo)] |= mask[tuple(hi)]
        out[tuple(hi)] |= mask[tuple(lo)]
    return out


def discrete_laplacian(f: LatticeField, x: Sequence[int]) -> float:
    d = f.dim
    fx = f[x]
    return sum(f[y] - fx for y in neighbors(x, d)) / (2 * d)


def discrete_derivative(f: LatticeField, x: Sequence[int], e: Direction) -> float:
    y = list(x)
    y[e.axis] += e.sign
    return f[y] - f[x]


def grow(f: LatticeField, new_radius: int) -> LatticeField:
    """Zero-pad ``f`` to the box of radius ``new_radius``."""
    if new_radius <= f.radius:
        raise InvalidConfig(f"new radius {new_radius} must exceed {f.radius}")
    pad = new_radius - f.radius
    try:
        values = np.pad(f.values, pad, mode="constant")
    except MemoryError as exc:  # pragma: no cover - depends on the host
        raise MemoryError(f"cannot grow lattice to radius {new_radius}") from exc
    return LatticeField(f.dim, new_radius, values)


def write_csv(path, u: LatticeField, mu: LatticeField, visited: np.ndarray) -> None:
    """Dump visited sites as ``x1,...,xd,u,mu`` with 17 significant digits."""
    d = u.dim
    coords = u.sites(visited)
    idx = tuple((coords + u.radius).T)
    header = ",".join([f"x{i + 1}" for i in range(d)] + ["u", "mu"])
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for c, uu, mm in zip(coords.tolist(), u.values[idx].tolist(), mu.values[idx].tolist()):
            fh.write(",".join(str(v) for v in c) + f",{uu:.17g},{mm:.17g}\n")


def read_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_csv`: (coords, u, mu)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    d = len(header) - 2
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return np.zeros((0, d), dtype=np.int64), np.zeros(0), np.zeros(0)
    return data[:, :d].astype(np.int64), data[:, d], data[:, d + 1]
