"""Boxes, anchored point extension, fill distance, grids and sampling sets."""

from __future__ import annotations

import csv
import json
import sys
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import CapabilityError, InputError
from .index_sets import DownwardClosedFamily, SubsetMask, format_subset, parse_subset

MAX_GRID_POINTS = 5_000_000
MAX_SPARSE_POINTS = 1_000_000
# probes per axis used when the block dimension is 2 or 3
DEFAULT_PROBES = {2: 256, 3: 64}
_SNAP = 1e-14


class DuplicatePointsWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError("box bounds must be vectors of equal length")
        if not np.all(lo < hi):
            raise InputError("box requires lower < upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, d: int, lo: float = 0.0, hi: float = 1.0) -> "Box":
        return cls(np.full(d, lo), np.full(d, hi))

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def restrict(self, u: SubsetMask) -> "Box":
        idx = list(u.indices)
        return Box(self.lower[idx], self.upper[idx])

    def contains(self, pts, tol: float = 1e-12) -> bool:
        pts = np.atleast_2d(pts)
        return bool(np.all(pts >= self.lower - tol) and np.all(pts <= self.upper + tol))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + rng.random((n, self.d)) * self.widths


@dataclass(frozen=True, eq=False)
class Anchor:
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", np.atleast_1d(np.asarray(self.c, dtype=float)))

    @property
    def d(self) -> int:
        return self.c.size

    def check(self, box: Box) -> "Anchor":
        if self.d != box.d:
            raise InputError("anchor and box dimensions differ")
        if np.any(self.c < box.lower) or np.any(self.c > box.upper):
            raise InputError("anchor lies outside the box")
        return self


def anchored_extend(x_tilde, u: SubsetMask, anchor: Anchor) -> np.ndarray:
    """The point (x~; c)_u: x~ at the coordinates in u, anchor elsewhere.

    Accepts a single vector of length #u or an array of shape (N, #u).
    """
    x_tilde = np.asarray(x_tilde, dtype=float)
    single = x_tilde.ndim <= 1
    xt = x_tilde.reshape(1, -1) if single else x_tilde
    if single and u.card == 0:
        xt = np.zeros((1, 0))
    if xt.shape[1] != u.card:
        raise InputError(f"expected {u.card} coordinates for {u}, got {xt.shape[1]}")
    if anchor.d != u.d:
        raise InputError("anchor dimension does not match subset dimension")
    out = np.tile(anchor.c, (xt.shape[0], 1))
    out[:, list(u.indices)] = xt
    return out[0] if single else out


def fill_distance(points, box: Box, resolution: int | None = None) -> float:
    """Largest distance from a point of ``box`` to the nearest sample.

    One-dimensional sets are handled exactly (the supremum sits at an
    endpoint or a gap midpoint). In two and three dimensions the supremum
    is approximated on a tensor probe grid of ``resolution`` points per axis.
    """
    pts = np.asarray(points, dtype=float)
    k = box.d
    if pts.ndim == 1:
        pts = pts.reshape(-1, k) if k > 0 else pts.reshape(-1, 0)
    if pts.shape[0] == 0:
        raise InputError("fill distance of an empty point set")
    if pts.shape[1] != k:
        raise InputError("points and box dimensions differ")
    if k == 0:
        return 0.0
    if k > 3:
        raise CapabilityError("fill distance is only available for dimension <= 3")
    if k == 1:
        x = np.sort(pts[:, 0])
        gaps = np.diff(x) / 2.0
        cand = [x[0] - box.lower[0], box.upper[0] - x[-1]]
        if gaps.size:
            cand.append(gaps.max())
        return float(max(cand))
    m = resolution or DEFAULT_PROBES[k]
    if m < 2:
        raise InputError("need at least 2 probes per axis")
    axes = [np.linspace(lo, hi, m) for lo, hi in zip(box.lower, box.upper)]
    probes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    dist, _ = cKDTree(pts).query(probes)
    return float(dist.max())


def separation_radius(points) -> float:
    """Half the smallest pairwise distance; 0 (with a warning) on duplicates."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] < 2:
        raise InputError("separation radius needs at least two points")
    dist, _ = cKDTree(pts).query(pts, k=2)
    q = float(dist[:, 1].min()) / 2.0
    if q == 0.0:
        warnings.warn("point set contains duplicates", DuplicatePointsWarning, stacklevel=2)
    return q


def uniform_grid(box_u: Box, m: int) -> np.ndarray:
    """Tensor grid with ``m`` equispaced points per axis, corners included.

    Ordered with the last coordinate varying fastest.
    """
    if m < 2:
        raise InputError("uniform grid needs m >= 2")
    k = box_u.d
    if m**k > MAX_GRID_POINTS:
        raise CapabilityError(f"uniform grid with {m}^{k} points exceeds the cap")
    axes = [np.linspace(lo, hi, m) for lo, hi in zip(box_u.lower, box_u.upper)]
    return np.array(list(product(*axes)), dtype=float).reshape(-1, k)


def _cc_points(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros(1)
    frac = np.arange(n) / (n - 1)
    x = -np.cos(np.pi * frac)
    x[np.abs(x) < _SNAP] = 0.0
    x[np.abs(x - 1.0) < _SNAP] = 1.0
    x[np.abs(x + 1.0) < _SNAP] = -1.0
    return x


def cc_count(j: int) -> int:
    return 1 if j == 1 else 2 ** (j - 1) + 1


def clenshaw_curtis_level(j: int) -> np.ndarray:
    """Nested Clenshaw-Curtis points of level ``j`` on [-1, 1]."""
    if j < 1:
        raise InputError("Clenshaw-Curtis level must be >= 1")
    if j > 40:
        raise CapabilityError("Clenshaw-Curtis level too large")
    return _cc_points(cc_count(j))


def _compositions(q: int, n: int):
    """Multi-indices i in N^n (entries >= 1) with |i| = q."""
    if n == 1:
        yield (q,)
        return
    for first in range(1, q - n + 2):
        for rest in _compositions(q - first, n - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class SparseGridSpec:
    u: SubsetMask
    q: int

    def __post_init__(self):
        if self.q < self.u.card or self.q < 1:
            raise InputError(f"sparse grid level q={self.q} must be >= #u={self.u.card} and >= 1")


def sparse_grid(spec: SparseGridSpec, cap: int = MAX_SPARSE_POINTS) -> np.ndarray:
    """Clenshaw-Curtis sparse grid in [-1, 1]^#u, deduplicated and sorted.

    For u = {} the level set Y_q is kept with its multiplicity, so the result
    has shape (#Y_q, 0); after anchored extension every copy becomes the anchor.
    """
    n, q = spec.u.card, spec.q
    if n == 0:
        cnt = cc_count(q)
        if cnt > cap:
            raise CapabilityError("sparse grid exceeds the point cap")
        return np.zeros((cnt, 0))
    levels = {}
    pts = set()
    for idx in _compositions(q, n):
        factors = []
        for j in idx:
            if j not in levels:
                levels[j] = tuple(clenshaw_curtis_level(j))
            factors.append(levels[j])
        size = int(np.prod([len(f) for f in factors]))
        if size > cap:
            raise CapabilityError("sparse grid exceeds the point cap")
        pts.update(product(*factors))
        if len(pts) > cap:
            raise CapabilityError("sparse grid exceeds the point cap")
    return np.array(sorted(pts), dtype=float).reshape(-1, n)


def map_from_reference(pts, box_u: Box) -> np.ndarray:
    """Affine map from [-1, 1]^k onto ``box_u``."""
    pts = np.asarray(pts, dtype=float)
    if box_u.d == 0:
        return pts.reshape(-1, 0)
    mid = (box_u.lower + box_u.upper) / 2
    half = box_u.widths / 2
    return mid + pts * half


@dataclass(frozen=True, eq=False)
class SamplingSet:
    """Per-block anchored points; blocks follow the family's canonical order."""

    family: DownwardClosedFamily
    blocks: dict
    block_fill: dict
    anchor: Anchor
    box: Box
    has_duplicates: bool = False
    duplicate_count: int = 0

    @property
    def d(self) -> int:
        return self.family.d

    @property
    def block_sizes(self) -> list[int]:
        return [self.blocks[u].shape[0] for u in self.family]

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.blocks[u] for u in self.family])

    @property
    def labels(self) -> list[SubsetMask]:
        return [u for u in self.family for _ in range(self.blocks[u].shape[0])]

    def __len__(self) -> int:
        return sum(self.block_sizes)

    @property
    def fill_distance(self) -> float | None:
        vals = list(self.block_fill.values())
        if any(v is None for v in vals):
            return None
        return max(vals)


def assemble_sampling_set(
    family: DownwardClosedFamily,
    per_block: Mapping[SubsetMask, Sequence],
    anchor: Anchor,
    box: Box,
    resolution: int | None = None,
) -> SamplingSet:
    """Extend each low-dimensional block with the anchor and record fill distances."""
    anchor.check(box)
    if family.d != box.d:
        raise InputError("family and box dimensions differ")
    blocks, fills = {}, {}
    for u in family:
        if u not in per_block:
            raise InputError(f"missing point block for {u}")
        raw = np.asarray(per_block[u], dtype=float)
        if u.card == 0:
            raw = raw.reshape(max(raw.shape[0] if raw.ndim else 1, 1), 0)
        else:
            raw = raw.reshape(-1, u.card)
        if raw.shape[0] == 0:
            raise InputError(f"block {u} is empty")
        bu = box.restrict(u) if u.card else None
        if bu is not None and not bu.contains(raw):
            raise InputError(f"block {u} has points outside the box")
        blocks[u] = anchored_extend(raw, u, anchor)
        fills[u] = 0.0 if u.card == 0 else (
            fill_distance(raw, bu, resolution) if u.card <= 3 else None
        )
    allpts = np.vstack([blocks[u] for u in family])
    n_unique = np.unique(allpts, axis=0).shape[0]
    dup = allpts.shape[0] - n_unique
    return SamplingSet(family, blocks, fills, anchor, box, dup > 0, int(dup))


def uniform_sampling_set(
    family: DownwardClosedFamily, anchor: Anchor, box: Box, m, resolution=None
) -> SamplingSet:
    """Quasi-uniform blocks; ``m`` is an int or a map u -> points per axis."""
    sizes = {u: (m[u] if isinstance(m, Mapping) else m) for u in family}
    # check the total before building anything
    if sum(mu ** u.card for u, mu in sizes.items()) > MAX_GRID_POINTS:
        raise CapabilityError(f"sampling set would exceed {MAX_GRID_POINTS} points")
    per = {}
    for u, mu in sizes.items():
        per[u] = uniform_grid(box.restrict(u), mu) if u.card else np.zeros((1, 0))
    return assemble_sampling_set(family, per, anchor, box, resolution)


def sparse_sampling_set(
    family: DownwardClosedFamily, anchor: Anchor, box: Box, q
) -> SamplingSet:
    """Sparse-grid blocks with level #u + q (or an explicit map u -> q_u)."""
    per = {}
    for u in family:
        qu = q[u] if isinstance(q, Mapping) else u.card + q
        ref = sparse_grid(SparseGridSpec(u, qu))
        per[u] = map_from_reference(ref, box.restrict(u)) if u.card else ref
    return assemble_sampling_set(family, per, anchor, box)


@contextmanager
def output_stream(dest):
    """Yield a text handle for a path, an open handle, or stdout for None / '-'."""
    if dest is None or dest == "-":
        yield sys.stdout
    elif hasattr(dest, "write"):
        yield dest
    else:
        with open(dest, "w", newline="") as fh:
            yield fh


def write_points_csv(path, sampling: SamplingSet, extra: dict | None = None) -> None:
    """CSV with header ``block,x1,...,xd``; a leading '#' line carries box and anchor.

    ``path`` may also be an open text handle, or None for stdout.
    """
    d = sampling.d
    meta = {
        "box": [sampling.box.lower.tolist(), sampling.box.upper.tolist()],
        "anchor": sampling.anchor.c.tolist(),
    }
    if extra:
        meta.update(extra)
    with output_stream(path) as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block"] + [f"x{j + 1}" for j in range(d)])
        for u in sampling.family:
            for p in sampling.blocks[u]:
                w.writerow([format_subset(u)] + [repr(float(v)) for v in p])


def read_csv_with_meta(path) -> tuple[dict, list[str], list[list[str]]]:
    meta: dict = {}
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    with fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                try:
                    meta.update(json.loads(line[1:]))
                except json.JSONDecodeError:
                    pass
                continue
            lines.append(line)
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError(f"{path}: empty CSV") from None
    rows = [r for r in reader if r]
    return meta, header, rows


def read_points_csv(path, box: Box | None = None, anchor: Anchor | None = None) -> SamplingSet:
    """Rebuild a SamplingSet written by :func:`write_points_csv`.

    Without metadata the anchor is taken from the {} block and the box
    defaults to the bounding box of the points.
    """
    meta, header, rows = read_csv_with_meta(path)
    if not header or header[0] != "block":
        raise InputError(f"{path}: expected header 'block,x1,...,xd'")
    d = len(header) - 1
    try:
        data = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float).reshape(-1, d)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    labels = [parse_subset(r[0], d) for r in rows]
    if box is None:
        if "box" in meta:
            box = Box(meta["box"][0], meta["box"][1])
        else:
            box = Box(data.min(axis=0), data.max(axis=0))
    order: dict[SubsetMask, list[int]] = {}
    for i, u in enumerate(labels):
        order.setdefault(u, []).append(i)
    family = DownwardClosedFamily(d, tuple(order))
    if anchor is None:
        if "anchor" in meta:
            anchor = Anchor(meta["anchor"])
        elif SubsetMask.empty(d) in order:
            anchor = Anchor(data[order[SubsetMask.empty(d)][0]])
        else:
            raise InputError(f"{path}: cannot infer the anchor")
    per = {}
    for u, rows_u in order.items():
        pts = data[rows_u]
        c_out = [j for j in range(d) if j not in u.indices]
        if not np.array_equal(pts[:, c_out], np.tile(anchor.c[c_out], (len(rows_u), 1))):
            raise InputError(f"{path}: block {u} has points off the anchor")
        per[u] = pts[:, list(u.indices)]
    return assemble_sampling_set(family, per, anchor, box)
