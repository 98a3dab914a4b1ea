"""Flat cone spheres with exactly computable lengths and areas.

* doubled convex polygons (two copies glued along the boundary);
* boundaries of convex polyhedra, with vertex-to-vertex geodesic distance
  found by searching over edge unfoldings;
* the four-point pillowcase ``C / (Lambda, z -> -z)`` for ``Lambda = Z + Z tau``,
  with a Monte Carlo sampler of ``tau`` under the hyperbolic measure.
"""

from __future__ import annotations

import heapq
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateTriangle,
    MalformedSurface,
    NotConnected,
    UnfoldingDepthExceeded,
)

SURFACE_FORMAT = "flatcone.surface/1"
MAX_UNFOLD_DEPTH = 32


def _shoelace(pts) -> float:
    p = np.asarray(pts, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


# ---------------------------------------------------------------------------
# Doubled polygons
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DoubledPolygon:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise MalformedSurface("a doubled polygon needs at least 3 planar vertices")
        n = len(v)
        for k in range(n):
            e1 = v[(k + 1) % n] - v[k]
            e2 = v[(k + 2) % n] - v[(k + 1) % n]
            if _cross(e1, e2) <= 0.0:
                raise MalformedSurface("vertices must form a strictly convex counterclockwise loop")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def regular(cls, n: int) -> "DoubledPolygon":
        t = 2.0 * math.pi * np.arange(n) / n
        return cls(np.stack([np.cos(t), np.sin(t)], axis=1))

    @classmethod
    def from_dict(cls, d: dict) -> "DoubledPolygon":
        return cls(np.asarray(d["vertices"], dtype=float))

    def area(self) -> float:
        return 2.0 * _shoelace(self.vertices)

    def normalized(self) -> "DoubledPolygon":
        return DoubledPolygon(self.vertices / math.sqrt(self.area()))

    def interior_angles(self) -> np.ndarray:
        v = self.vertices
        n = len(v)
        out = np.empty(n)
        for k in range(n):
            a = v[k - 1] - v[k]
            b = v[(k + 1) % n] - v[k]
            out[k] = math.atan2(abs(_cross(a, b)), float(np.dot(a, b)))
        return out


def doubled_distance(poly: DoubledPolygon, i: int, j: int, normalize: bool = True) -> float:
    """Distance between two vertices: the straight segment in either face."""
    if i == j:
        raise ValueError("need two distinct vertices")
    p = poly.normalized() if normalize else poly
    return float(np.linalg.norm(p.vertices[i] - p.vertices[j]))


# ---------------------------------------------------------------------------
# Convex polyhedra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvexPolyhedron:
    vertices: np.ndarray
    faces: tuple
    edge_faces: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 4:
            raise MalformedSurface("a polyhedron needs at least 4 vertices in 3D")
        faces = tuple(tuple(int(i) for i in f) for f in self.faces)
        if len(faces) < 4:
            raise MalformedSurface("a closed polyhedron needs at least 4 faces")
        for f in faces:
            if len(f) < 3 or len(set(f)) != len(f):
                raise MalformedSurface(f"bad face {f}")
            if min(f) < 0 or max(f) >= len(v):
                raise MalformedSurface(f"face {f} refers to a missing vertex")
        centroid = v.mean(axis=0)
        scale = float(np.max(np.linalg.norm(v - centroid, axis=1)))
        edge_faces: dict = {}
        for fi, f in enumerate(faces):
            normal = _face_normal(v, f)
            for k in range(len(f)):
                off = abs(float(np.dot(v[f[k]] - v[f[0]], normal)))
                if off > 1e-10 * max(scale, 1.0):
                    raise MalformedSurface(f"face {fi} is not planar")
            if float(np.dot(v[f[0]] - centroid, normal)) <= 0.0:
                raise MalformedSurface(f"face {fi} is not oriented outward")
            side = (v - v[f[0]]) @ normal
            if np.any(side > 1e-9 * max(scale, 1.0)):
                raise MalformedSurface("vertex set is not convex")
            for k in range(len(f)):
                e = (f[k], f[(k + 1) % len(f)])
                key = (min(e), max(e))
                edge_faces.setdefault(key, []).append(fi)
        for key, fs in edge_faces.items():
            if len(fs) != 2:
                raise MalformedSurface(f"edge {key} is shared by {len(fs)} faces")
        _check_connected(len(faces), edge_faces)
        used = {i for f in faces for i in f}
        if len(used) != len(v):
            raise NotConnected("some vertices belong to no face")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "edge_faces", {k: tuple(fs) for k, fs in edge_faces.items()})

    @classmethod
    def from_dict(cls, d: dict) -> "ConvexPolyhedron":
        if "vertices" not in d or "faces" not in d:
            raise MalformedSurface("surface JSON needs 'vertices' and 'faces'")
        try:
            verts = np.asarray(d["vertices"], dtype=float)
            faces = [list(map(int, f)) for f in d["faces"]]
        except (TypeError, ValueError) as exc:
            raise MalformedSurface(f"unreadable surface data: {exc}") from None
        return cls(verts, tuple(tuple(f) for f in faces))

    @classmethod
    def from_json(cls, path) -> "ConvexPolyhedron":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise MalformedSurface(f"cannot read surface file {path}: {exc}") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "format_version": SURFACE_FORMAT,
            "vertices": self.vertices.tolist(),
            "faces": [list(f) for f in self.faces],
        }

    def area(self) -> float:
        total = 0.0
        for f in self.faces:
            p0 = self.vertices[f[0]]
            for k in range(1, len(f) - 1):
                total += 0.5 * float(np.linalg.norm(np.cross(self.vertices[f[k]] - p0, self.vertices[f[k + 1]] - p0)))
        return total

    def scaled(self, lam: float) -> "ConvexPolyhedron":
        return ConvexPolyhedron(self.vertices * lam, self.faces)

    def normalized(self) -> "ConvexPolyhedron":
        return self.scaled(1.0 / math.sqrt(self.area()))


def _face_normal(v, f):
    n = np.zeros(3)
    for k in range(len(f)):
        a, b = v[f[k]], v[f[(k + 1) % len(f)]]
        n += np.cross(a, b)
    norm = float(np.linalg.norm(n))
    if norm == 0.0:
        raise MalformedSurface(f"degenerate face {f}")
    return n / norm


def _check_connected(nfaces, edge_faces):
    adj = [[] for _ in range(nfaces)]
    for a, b in edge_faces.values():
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        for g in adj[stack.pop()]:
            if g not in seen:
                seen.add(g)
                stack.append(g)
    if len(seen) != nfaces:
        raise NotConnected("face adjacency graph is disconnected")


def _load_bundled(name: str) -> ConvexPolyhedron:
    text = resources.files("flatcone").joinpath("data", name).read_text()
    return ConvexPolyhedron.from_dict(json.loads(text))


def regular_tetrahedron() -> ConvexPolyhedron:
    return _load_bundled("tetrahedron.json")


def square_pyramid() -> ConvexPolyhedron:
    """Square pyramid with all five defects equal to 4*pi/5 (apex is vertex 0)."""
    return _load_bundled("pyramid.json")


def make_square_pyramid(height: float) -> ConvexPolyhedron:
    """Pyramid over the square ``[-1, 1]**2`` with apex at the given height."""
    base = [(1.0, 1.0, 0.0), (-1.0, 1.0, 0.0), (-1.0, -1.0, 0.0), (1.0, -1.0, 0.0)]
    verts = np.array([(0.0, 0.0, height)] + base)
    faces = ((0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 1), (4, 3, 2, 1))
    return ConvexPolyhedron(verts, faces)


def equal_defect_pyramid_height() -> float:
    """Apex height of :func:`make_square_pyramid` making the apex angle ``4 * 3pi/10``.

    Each lateral face over a base edge of length 2 has apex angle ``2 atan(1/slant)``
    where ``slant = sqrt(1 + h**2)``; the equal-defect condition fixes that
    angle to ``3 pi / 10``.
    """
    slant = 1.0 / math.tan(3.0 * math.pi / 20.0)
    return math.sqrt(slant * slant - 1.0)


def cone_defects(surface) -> np.ndarray:
    if isinstance(surface, DoubledPolygon):
        return 2.0 * (math.pi - surface.interior_angles())
    v = surface.vertices
    total = np.zeros(len(v))
    for f in surface.faces:
        m = len(f)
        for k in range(m):
            a = v[f[k - 1]] - v[f[k]]
            b = v[f[(k + 1) % m]] - v[f[k]]
            total[f[k]] += math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))
    return 2.0 * math.pi - total


def _edge_graph_distance(poly: ConvexPolyhedron, i: int, j: int) -> float:
    adj: dict = {}
    for a, b in poly.edge_faces:
        w = float(np.linalg.norm(poly.vertices[a] - poly.vertices[b]))
        adj.setdefault(a, []).append((b, w))
        adj.setdefault(b, []).append((a, w))
    dist = {i: 0.0}
    heap = [(0.0, i)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == j:
            return d
        if d > dist.get(u, math.inf):
            continue
        for w_, c in adj[u]:
            nd = d + c
            if nd < dist.get(w_, math.inf):
                dist[w_] = nd
                heapq.heappush(heap, (nd, w_))
    raise NotConnected(f"vertex {j} is unreachable from {i}")


def _place_adjacent(v, face, pa, pb, a, b, away):
    """2D positions of ``face``'s vertices, hinged on the edge ``(a, b)``.

    ``away`` is a unit 2D normal of the edge pointing out of the previous face.
    """
    e3 = v[b] - v[a]
    L = float(np.linalg.norm(e3))
    e3 = e3 / L
    e2 = (pb - pa) / L
    out = {}
    for w in face:
        d = v[w] - v[a]
        along = float(np.dot(d, e3))
        perp = float(np.linalg.norm(d - along * e3))
        out[w] = pa + along * e2 + perp * away
    return out


def _segment_distance(p, q) -> float:
    """Distance from the origin to the segment ``[p, q]``."""
    d = q - p
    t = -float(np.dot(p, d)) / float(np.dot(d, d))
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p + t * d))


def polyhedron_distance(poly: ConvexPolyhedron, i: int, j: int, normalize: bool = True,
                        max_depth: int = MAX_UNFOLD_DEPTH) -> float:
    """Shortest geodesic between two vertices by search over unfoldings.

    Shortest paths on a convex surface never pass through a vertex, so a
    candidate path is a straight segment in some chain of unfolded faces.
    Each search state carries the wedge of directions (from the source at
    the origin) that stay inside the chain; chains whose next edge lies
    farther than the current best are pruned.
    """
    if i == j:
        return 0.0
    P = poly.normalized() if normalize else poly
    v = P.vertices
    best = _edge_graph_distance(P, i, j)
    tol = 1e-12
    stack = []
    for fi, f in enumerate(P.faces):
        if i not in f:
            continue
        k = f.index(i)
        m = len(f)
        nxt, prv = f[(k + 1) % m], f[k - 1]
        # local frame: source at the origin, face counterclockwise
        e1 = v[nxt] - v[i]
        e1 = e1 / np.linalg.norm(e1)
        nrm = _face_normal(v, f)
        e2 = np.cross(nrm, e1)
        pos = {w: np.array([float(np.dot(v[w] - v[i], e1)), float(np.dot(v[w] - v[i], e2))]) for w in f}
        wedge = (pos[nxt], pos[prv])
        stack.append((fi, pos, wedge, None, (fi,)))
    while stack:
        fi, pos, (r, l), entry, path = stack.pop()
        f = P.faces[fi]
        if j in pos and j != i:
            pj = pos[j]
            if _cross(r, pj) >= -tol * np.linalg.norm(pj) and _cross(pj, l) >= -tol * np.linalg.norm(pj):
                best = min(best, float(np.linalg.norm(pj)))
        m = len(f)
        for k in range(m):
            a, b = f[k], f[(k + 1) % m]
            key = (min(a, b), max(a, b))
            pa, pb = pos[a], pos[b]
            # edges through the source image cannot be crossed transversally
            if key == entry or np.linalg.norm(pa) < tol or np.linalg.norm(pb) < tol:
                continue
            # the chain is counterclockwise, so the edge runs from right to left as seen from the origin
            r2, l2 = (pa, pb) if _cross(pa, pb) > 0 else (pb, pa)
            nr = r2 if _cross(r, r2) > 0 else r
            nl = l2 if _cross(l2, l) > 0 else l
            if _cross(nr, nl) <= 0.0:
                continue
            if _segment_distance(pa, pb) >= best:
                continue
            g = P.edge_faces[key][0] if P.edge_faces[key][1] == fi else P.edge_faces[key][1]
            if g in path:
                continue
            if len(path) >= max_depth:
                raise UnfoldingDepthExceeded(f"unfolding chain exceeds {max_depth} faces")
            d = pb - pa
            away = np.array([d[1], -d[0]]) / np.linalg.norm(d)
            inside = np.mean([pos[w] for w in f], axis=0) - pa
            if np.dot(away, inside) > 0:
                away = -away
            gpos = _place_adjacent(v, P.faces[g], pa, pb, a, b, away)
            stack.append((g, gpos, (nr, nl), key, path + (g,)))
    return best


# ---------------------------------------------------------------------------
# Base-case oracle and developed polygons
# ---------------------------------------------------------------------------


def doubled_triangle_area(phi1: float, phi2: float) -> float:
    """Twice the area of the triangle with angles ``phi1/2, phi2/2`` at a unit side."""
    t1, t2 = 0.5 * phi1, 0.5 * phi2
    if not (t1 > 0 and t2 > 0 and t1 + t2 < math.pi):
        raise DegenerateTriangle(f"half-angles {t1!r}, {t2!r} do not form a triangle")
    # apex from the law of sines
    side = math.sin(t2) / math.sin(t1 + t2)
    apex = (side * math.cos(t1), side * math.sin(t1))
    return 2.0 * _shoelace([(0.0, 0.0), (1.0, 0.0), apex])


def developed_polygon(defects, points) -> np.ndarray:
    """Boundary loop of the polygon developed from cut points ``P_1 .. P_{n-1}``.

    Between consecutive copies ``P_k, P_{k+1}`` of the last cone point sits
    the cone point with defect ``defects[k]`` (the first defect sits between
    ``P_{n-1}`` and ``P_1``), at the apex of the isosceles triangle with apex
    angle equal to that defect.
    """
    P = [complex(p) for p in points]
    d = list(defects)
    m = len(P)
    if len(d) != m + 1:
        raise ValueError("need one more defect than cut points")
    loop = []
    for k in range(m):
        a, b = P[k - 1], P[k]  # k = 0 wraps to the closing edge P_{n-1} -> P_1
        c = 1.0 / math.tan(0.5 * d[k])
        x = 0.5 * (a + b) + 0.5j * (b - a) * c
        loop.extend([x, b])
    return np.array([[z.real, z.imag] for z in loop])


def polygon_area(loop) -> float:
    return _shoelace(loop)


# ---------------------------------------------------------------------------
# Torus quotient model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusQuotient:
    tau: complex

    def __post_init__(self):
        t = complex(self.tau)
        if not (t.imag > 0 and abs(t.real) <= 1.0 + 1e-12 and abs(2 * t + 1) >= 1 - 1e-12 and abs(2 * t - 1) >= 1 - 1e-12):
            raise ValueError(f"tau = {t!r} is outside the fundamental domain")
        object.__setattr__(self, "tau", t)


def in_fundamental_domain(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=complex)
    return (tau.imag > 0) & (np.abs(tau.real) <= 1.0) & (np.abs(2 * tau + 1) >= 1) & (np.abs(2 * tau - 1) >= 1)


def _lattice_min(tau: np.ndarray) -> np.ndarray:
    """``min |1/2 + lambda|`` over ``lambda in Z + Z tau`` (vectorized).

    Gauss-reduce the basis ``(1, tau)``, round the coordinates of ``-1/2``
    in the reduced basis, and search a +-2 box around the rounded point.
    """
    w1 = np.ones_like(tau)
    w2 = tau.copy()
    for _ in range(500):
        swap = np.abs(w2) < np.abs(w1)
        w1, w2 = np.where(swap, w2, w1), np.where(swap, w1, w2)
        mu = np.round((w2 * np.conj(w1)).real / np.abs(w1) ** 2)
        if not np.any(mu):
            break
        w2 = w2 - mu * w1
    det = w1.real * w2.imag - w1.imag * w2.real
    # coordinates (c1, c2) with c1 w1 + c2 w2 = -1/2
    c1 = np.round((-0.5 * w2.imag) / det)
    c2 = np.round((0.5 * w1.imag) / det)
    best = np.full(tau.shape, np.inf)
    for di in range(-2, 3):
        for dj in range(-2, 3):
            lam = (c1 + di) * w1 + (c2 + dj) * w2
            best = np.minimum(best, np.abs(0.5 + lam))
    return best


def lattice_min_bruteforce(tau: complex, window: int | None = None) -> float:
    """Exhaustive ``min |1/2 + m + n tau|`` over ``|m|, |n| <= window``."""
    tau = complex(tau)
    if window is None:
        window = math.ceil(2.0 / (math.sqrt(3.0) * min(1.0, tau.imag))) + 1
    r = np.arange(-window, window + 1)
    M, N = np.meshgrid(r, r)
    return float(np.min(np.abs(0.5 + M + N * tau)))


def torus_quotient_invariants(tq: TorusQuotient | complex):
    """``(l, area, a)`` for the pillowcase of ``Z + Z tau`` with marked points 0 and 1/2."""
    tau = tq.tau if isinstance(tq, TorusQuotient) else complex(tq)
    l = float(_lattice_min(np.array([tau]))[0])
    area = tau.imag / 2.0
    return l, area, area / l**2


@dataclass
class SampleBatch:
    l: np.ndarray
    area: np.ndarray
    a: np.ndarray
    rng_seed: int
    epsilon: float
    workers: int = 1

    @property
    def n(self) -> int:
        return int(self.a.size)

    def bias_bound(self) -> float:
        return truncation_bias_bound(self.epsilon)

    def to_csv(self) -> str:
        lines = ["l,area,a"]
        for row in zip(self.l.tolist(), self.area.tolist(), self.a.tolist()):
            lines.append(",".join(repr(x) for x in row))
        return "\n".join(lines) + "\n"

    def sidecar(self) -> dict:
        return {"seed": self.rng_seed, "epsilon": self.epsilon, "n": self.n, "workers": self.workers,
                "bias_bound": self.bias_bound()}

    def write(self, csv_path) -> None:
        csv_path = Path(csv_path)
        csv_path.write_text(self.to_csv())
        csv_path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=1, sort_keys=True))


def truncation_bias_bound(epsilon: float) -> float:
    """Fraction of hyperbolic mass below height ``epsilon`` in the fundamental domain.

    Near each of the cusps 0 and 1 ~ -1 the domain has width ``2 y**2 + O(y**4)``
    at height ``y``, so the excised mass is ``4 epsilon`` out of a total
    area of ``2 pi``.
    """
    return 2.0 * epsilon / math.pi


def _sample_chunk(n: int, seed: int, epsilon: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = []
    have = 0
    while have < n:
        m = max(1024, int(1.2 * (n - have)) + 64)
        x = rng.uniform(-1.0, 1.0, m)
        y = epsilon / (1.0 - rng.uniform(0.0, 1.0, m))  # density ~ 1/y**2 on [eps, inf)
        t = x + 1j * y
        t = t[in_fundamental_domain(t)]
        out.append(t)
        have += t.size
    return np.concatenate(out)[:n]


def sample_torus_quotient(n: int, seed: int = 0, epsilon: float = 0.01, workers: int = 1) -> SampleBatch:
    """i.i.d. pillowcase invariants with ``tau`` drawn from ``dx dy / y**2``.

    Worker ``k`` uses the stream ``default_rng(seed + k)`` and draws a fixed
    share of the samples; shares are concatenated in worker order.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if not (0.0 < epsilon <= 0.05):
        raise ValueError("epsilon must lie in (0, 0.05]")
    shares = [n // workers + (1 if k < n % workers else 0) for k in range(workers)]
    if workers == 1:
        chunks = [_sample_chunk(n, seed, epsilon)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(lambda k: _sample_chunk(shares[k], seed + k, epsilon), range(workers)))
    tau = np.concatenate(chunks)
    l = _lattice_min(tau)
    area = tau.imag / 2.0
    return SampleBatch(l, area, area / l**2, seed, epsilon, workers)
