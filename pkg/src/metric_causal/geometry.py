"""Manifold primitives: distance, exponential/log maps and parallel transport.

Four spaces are supported, each as a small frozen dataclass whose methods act
on plain numpy arrays in the ambient representation and broadcast over any
leading axes:

- :class:`Euclidean` -- flat ``R^n``.
- :class:`Sphere2` -- unit sphere in ``R^3``.
- :class:`Hyperbolic2` -- hyperboloid ``-x^2 + y^2 + z^2 = -1, x > 0``.
- :class:`KendallShape` -- planar shape space of ``K`` landmarks, stored as
  centred unit-norm complex ``K``-vectors (preshapes). Rotations are quotiented
  out inside every operation by aligning representatives.

The array methods do no validation; the module-level functions
(:func:`distance`, :func:`exp_map`, ...) work on :class:`ManifoldPoint` /
:class:`TangentVector` and check every invariant.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CutLocusError, DomainError, IngestionError, ValidationError

TOL = 1e-9
# below this norm a tangent vector is treated as zero
TINY = 1e-12


def _rdot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def _norm(a):
    return np.sqrt(np.maximum(_rdot(a, a), 0.0))


def _shape(size):
    return () if size is None or size == () else tuple(np.atleast_1d(size))


def _safe_div(num, den):
    return num / np.where(den < TINY, 1.0, den)


class Manifold:
    """Interface shared by the concrete spaces.

    Subclasses provide ``inner``, ``dist``, ``exp``, ``log``,
    ``transport_along``, ``project_tangent``, ``curvature_components``,
    ``random_point`` and ``validate_point``.
    """

    #: identifier used by the compiled kernels (None = no compiled kernel)
    kernel_code: int | None = None
    #: injectivity radius of the exponential map
    injectivity_radius: float = np.inf
    dtype = np.float64

    def norm(self, p, v):
        return np.sqrt(np.maximum(self.inner(p, v, v), 0.0))

    def transport(self, p, q, v):
        """Parallel transport of ``v`` from ``p`` to ``q`` along the minimal geodesic."""
        return self.transport_along(p, self.log(p, q), v)

    def dist(self, p, q):
        # averaging both directions makes d(p, q) == d(q, p) bit for bit
        return 0.5 * (self._directed_dist(p, q) + self._directed_dist(q, p))

    def zero_tangent(self, p):
        return np.zeros_like(p)

    def geodesic(self, p, v, t):
        return self.exp(p, t * v)

    def pairwise_dist(self, points):
        points = np.asarray(points)
        return np.stack([self.dist(y, points) for y in points])

    def validate_tangent(self, p, v):
        v = np.asarray(v, dtype=self.dtype)
        if v.shape != np.shape(p):
            raise ValidationError(f"tangent vector shape {v.shape} != point shape {np.shape(p)}")
        resid = np.max(np.abs(v - self.project_tangent(p, v)), initial=0.0)
        if not np.isfinite(resid) or resid > TOL * max(1.0, float(np.max(np.abs(v), initial=0.0))):
            raise ValidationError(f"vector is not tangent to {self} at the base point (residual {resid:.3g})")
        return v

    def random_tangent(self, p, rng, scale=1.0):
        raw = rng.standard_normal(np.shape(p))
        if np.iscomplexobj(p):
            raw = raw + 1j * rng.standard_normal(np.shape(p))
        return scale * self.project_tangent(p, raw)


@dataclass(frozen=True)
class Euclidean(Manifold):
    dim: int
    kernel_code = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("Euclidean dimension must be >= 1")

    @property
    def dimension(self):
        return self.dim

    @property
    def ambient_shape(self):
        return (self.dim,)

    def inner(self, p, u, v):
        return np.sum(u * v, axis=-1)

    def dist(self, p, q):
        return np.sqrt(np.sum((np.asarray(q) - p) ** 2, axis=-1))

    def exp(self, p, v):
        return p + v

    def log(self, p, q):
        return q - p

    def transport_along(self, p, V, w):
        return np.array(w, dtype=float, copy=True)

    def project_tangent(self, p, v):
        return np.asarray(v, dtype=float)

    def curvature_components(self, p, e, w):
        return [(0.0, w)]

    def validate_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (self.dim,) or not np.all(np.isfinite(p)):
            raise ValidationError(f"expected finite points of dimension {self.dim}, got shape {p.shape}")
        return p

    def random_point(self, rng, size=()):
        return rng.standard_normal(_shape(size) + (self.dim,))

    def pairwise_dist(self, points):
        points = np.asarray(points, dtype=float)
        diff = points[:, None, :] - points[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class Sphere2(Manifold):
    kernel_code = 1
    injectivity_radius = np.pi
    dimension = 2
    ambient_shape = (3,)

    def inner(self, p, u, v):
        return np.sum(u * v, axis=-1)

    def _directed_dist(self, p, q):
        c = _rdot(p, q)
        s = _norm(q - c * p)
        return np.arctan2(s, c)[..., 0]

    def exp(self, p, v):
        n = _norm(v)
        out = np.cos(n) * p + np.sin(n) * _safe_div(v, n)
        out = out / _norm(out)
        return np.where(n < TINY, p, out)

    def log(self, p, q):
        c = _rdot(p, q)
        w = q - c * p
        s = _norm(w)
        if np.any((s < TINY) & (c < 0)):
            raise CutLocusError("log map undefined for antipodal points on the sphere")
        theta = np.arctan2(s, c)
        return np.where(s < TINY, 0.0, theta * _safe_div(w, s))

    def transport_along(self, p, V, w):
        L = _norm(V)
        e = _safe_div(V, L)
        a = _rdot(e, w)
        return w + a * ((np.cos(L) - 1.0) * e - np.sin(L) * p)

    def project_tangent(self, p, v):
        return v - _rdot(p, v) * p

    def curvature_components(self, p, e, w):
        tang = _rdot(e, w) * e
        return [(0.0, tang), (1.0, w - tang)]

    def validate_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (3,):
            raise ValidationError(f"sphere points need 3 coordinates, got shape {p.shape}")
        err = np.abs(np.sqrt(np.sum(p * p, axis=-1)) - 1.0)
        if not np.all(err <= TOL):
            raise ValidationError(f"point not on the unit sphere (norm error {np.max(err):.3g})")
        return p

    def random_point(self, rng, size=()):
        shape = _shape(size) + (3,)
        x = rng.standard_normal(shape)
        return x / _norm(x)

    def pairwise_dist(self, points):
        points = np.asarray(points, dtype=float)
        c = points @ points.T
        s = np.linalg.norm(np.cross(points[:, None, :], points[None, :, :]), axis=-1)
        return np.arctan2(s, c)


def minkowski(u, v):
    """Minkowski inner product ``-u0 v0 + u1 v1 + u2 v2`` along the last axis."""
    return -u[..., 0] * v[..., 0] + np.sum(u[..., 1:] * v[..., 1:], axis=-1)


def _mk(u, v):
    return minkowski(u, v)[..., None]


@dataclass(frozen=True)
class Hyperbolic2(Manifold):
    kernel_code = 2
    dimension = 2
    ambient_shape = (3,)

    def inner(self, p, u, v):
        return minkowski(u, v)

    def _unit_log(self, p, q):
        m = -_mk(p, q)
        w = q - m * p
        # the Minkowski norm of w cancels badly far from the vertex; m^2 - 1 cancels near p
        n = np.where(m >= 2.0, np.sqrt(np.maximum(m * m - 1.0, 0.0)), np.sqrt(np.maximum(_mk(w, w), 0.0)))
        return w, n

    def _directed_dist(self, p, q):
        _, n = self._unit_log(p, q)
        return np.arcsinh(n)[..., 0]

    def exp(self, p, v):
        n = np.sqrt(np.maximum(_mk(v, v), 0.0))
        out = np.cosh(n) * p + np.sinh(n) * _safe_div(v, n)
        out = self._reproject(out)
        return np.where(n < TINY, p, out)

    @staticmethod
    def _reproject(x):
        x = np.array(x, dtype=float, copy=True)
        x[..., 0] = np.sqrt(1.0 + np.sum(x[..., 1:] ** 2, axis=-1))
        return x

    def log(self, p, q):
        w, n = self._unit_log(p, q)
        d = np.arcsinh(n)
        return np.where(n < TINY, 0.0, d * _safe_div(w, n))

    def transport_along(self, p, V, w):
        L = np.sqrt(np.maximum(_mk(V, V), 0.0))
        e = _safe_div(V, L)
        a = _mk(e, w)
        return w + a * ((np.cosh(L) - 1.0) * e + np.sinh(L) * p)

    def transport(self, p, q, v):
        return v + _mk(q, v) / (1.0 - _mk(p, q)) * (p + q)

    def project_tangent(self, p, v):
        return v + _mk(p, v) * p

    def curvature_components(self, p, e, w):
        tang = _mk(e, w) * e
        return [(0.0, tang), (-1.0, w - tang)]

    def validate_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (3,):
            raise ValidationError(f"hyperboloid points need 3 coordinates, got shape {p.shape}")
        err = np.abs(minkowski(p, p) + 1.0)
        if not np.all(err <= TOL * np.maximum(1.0, p[..., 0] ** 2)) or not np.all(p[..., 0] > 0):
            raise ValidationError("point not on the upper sheet of the hyperboloid")
        return p

    def random_point(self, rng, size=()):
        shape = _shape(size)
        origin = np.array([1.0, 0.0, 0.0])
        v = np.zeros(shape + (3,))
        v[..., 1:] = rng.standard_normal(shape + (2,))
        return self.exp(np.broadcast_to(origin, v.shape), v)

    def pairwise_dist(self, points):
        points = np.asarray(points, dtype=float)
        m = -(points[:, None, :1] * points[None, :, :1])[..., 0] + points[:, 1:] @ points[:, 1:].T
        return np.arccosh(np.maximum(-m, 1.0))


def _herm(a, b):
    """Hermitian product ``sum(conj(a) * b)`` along the last axis (keepdims)."""
    return np.sum(np.conj(a) * b, axis=-1, keepdims=True)


@dataclass(frozen=True)
class KendallShape(Manifold):
    """Kendall's planar shape space of ``k_landmarks`` points.

    Points are preshapes: complex vectors with zero sum and unit norm. Two
    preshapes differing by a unit complex factor are the same shape.
    """

    k_landmarks: int
    injectivity_radius = np.pi / 2
    dtype = np.complex128

    def __post_init__(self):
        if self.k_landmarks < 3:
            raise ValidationError("Kendall shape space needs at least 3 landmarks")

    @property
    def dimension(self):
        return 2 * self.k_landmarks - 4

    @property
    def ambient_shape(self):
        return (self.k_landmarks,)

    def inner(self, p, u, v):
        return np.real(np.sum(np.conj(u) * v, axis=-1))

    def align(self, p, q):
        """Rotate ``q`` so that its Hermitian product with ``p`` is real and nonnegative."""
        h = _herm(p, q)
        a = np.abs(h)
        phase = np.where(a < TINY, 1.0, h / np.where(a < TINY, 1.0, a))
        return q * np.conj(phase), a, phase

    def _directed_dist(self, p, q):
        qa, c, _ = self.align(p, q)
        s = _norm_c(qa - c * p)
        return np.arctan2(s, c)[..., 0]

    def exp(self, p, v):
        n = _norm_c(v)
        out = np.cos(n) * p + np.sin(n) * _safe_div(v, n)
        out = out - out.mean(axis=-1, keepdims=True)
        out = out / _norm_c(out)
        return np.where(n < TINY, p, out)

    def log(self, p, q):
        qa, c, _ = self.align(p, q)
        if np.any(c < TINY):
            raise CutLocusError("log map undefined at shape distance pi/2")
        w = qa - c * p
        s = _norm_c(w)
        theta = np.arctan2(s, c)
        return np.where(s < TINY, 0.0, theta * _safe_div(w, s))

    def transport_along(self, p, V, w):
        L = _norm_c(V)
        e = _safe_div(V, L)
        c = _herm(e, w)
        return w + c * ((np.cos(L) - 1.0) * e - np.sin(L) * p)

    def transport(self, p, q, v):
        _, _, phase = self.align(p, q)
        return self.transport_along(p, self.log(p, q), v) * phase

    def project_tangent(self, p, v):
        v = np.asarray(v, dtype=complex)
        v = v - v.mean(axis=-1, keepdims=True)
        return v - _herm(p, v) * p

    def curvature_components(self, p, e, w):
        tang = np.real(_herm(e, w)) * e
        je = 1j * e
        holo = np.real(_herm(je, w)) * je
        return [(0.0, tang), (4.0, holo), (1.0, w - tang - holo)]

    def validate_point(self, p):
        p = np.asarray(p)
        if p.shape[-1:] != (self.k_landmarks,):
            raise ValidationError(f"expected preshapes with {self.k_landmarks} entries, got shape {p.shape}")
        p = p.astype(complex)
        if not np.all(np.abs(p.sum(axis=-1)) <= TOL):
            raise ValidationError("preshape is not centred")
        if not np.all(np.abs(np.sqrt(np.sum(np.abs(p) ** 2, axis=-1)) - 1.0) <= TOL):
            raise ValidationError("preshape does not have unit norm")
        return p

    def random_point(self, rng, size=()):
        shape = _shape(size) + (self.k_landmarks,)
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        z = z - z.mean(axis=-1, keepdims=True)
        return z / _norm_c(z)

    def pairwise_dist(self, points):
        points = np.asarray(points, dtype=complex)
        h = np.abs(np.conj(points) @ points.T)
        return np.arccos(np.clip(h, -1.0, 1.0))


def _norm_c(a):
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=-1, keepdims=True))


def kendall_preshape(landmarks):
    """Centre and scale a ``K x 2`` landmark matrix into a complex preshape.

    Parameters
    ----------
    landmarks : array_like, shape (K, 2) or (n, K, 2)
        Planar landmark coordinates.

    Returns
    -------
    ndarray, complex, shape (K,) or (n, K)
    """
    x = np.asarray(landmarks, dtype=float)
    if x.ndim < 2 or x.shape[-1] != 2:
        raise ValidationError(f"landmarks must have shape (K, 2), got {x.shape}")
    if x.shape[-2] < 3:
        raise ValidationError("at least 3 landmarks are required")
    z = x[..., 0] + 1j * x[..., 1]
    z = z - z.mean(axis=-1, keepdims=True)
    n = _norm_c(z)
    if np.any(n < TINY):
        raise ValidationError("degenerate configuration: all landmarks coincide")
    return z / n


def preshape_to_landmarks(z):
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1)


def read_landmarks_csv(path):
    """Read one shape per row from a CSV with columns ``x1, y1, ..., xK, yK``.

    An optional ``id`` column is returned separately. ``K`` is inferred from
    the number of remaining header columns.

    Returns
    -------
    ids : list of str or None
    landmarks : ndarray, shape (n, K, 2)
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        rows = [r for r in reader if any(c.strip() for c in r)]
    id_col = next((i for i, h in enumerate(header) if h.lower() == "id"), None)
    coord_cols = [i for i in range(len(header)) if i != id_col]
    if len(coord_cols) % 2 or len(coord_cols) < 6:
        raise IngestionError(f"{path}: expected 2K >= 6 coordinate columns, found {len(coord_cols)}")
    try:
        data = np.array([[float(r[i]) for i in coord_cols] for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise IngestionError(f"{path}: non-numeric or missing landmark value ({exc})") from None
    ids = [r[id_col].strip() for r in rows] if id_col is not None else None
    return ids, data.reshape(len(rows), -1, 2)


# -- typed, validating API ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    manifold: Manifold
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", self.manifold.validate_point(self.coords))


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ManifoldPoint
    components: np.ndarray = field(repr=False)

    def __post_init__(self):
        comps = self.base.manifold.validate_tangent(self.base.coords, self.components)
        object.__setattr__(self, "components", comps)

    @property
    def manifold(self):
        return self.base.manifold

    def norm(self):
        return float(self.manifold.norm(self.base.coords, self.components))


def _same(*objs):
    kinds = {o.manifold for o in objs}
    if len(kinds) != 1:
        raise DomainError(f"objects live on different manifolds: {sorted(map(repr, kinds))}")
    return kinds.pop()


def distance(p: ManifoldPoint, q: ManifoldPoint) -> float:
    m = _same(p, q)
    return float(m.dist(p.coords, q.coords))


def exp_map(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    m = _same(p, v)
    if v.base is not p and not np.allclose(v.base.coords, p.coords, atol=TOL, rtol=0):
        raise ValidationError("tangent vector is not based at p")
    return ManifoldPoint(m, m.exp(p.coords, v.components))


def log_map(p: ManifoldPoint, q: ManifoldPoint) -> TangentVector:
    m = _same(p, q)
    return TangentVector(p, m.log(p.coords, q.coords))


def parallel_transport(p: ManifoldPoint, q: ManifoldPoint, v: TangentVector) -> TangentVector:
    m = _same(p, q, v)
    if not np.allclose(v.base.coords, p.coords, atol=TOL, rtol=0):
        raise ValidationError("tangent vector is not based at p")
    return TangentVector(q, m.transport(p.coords, q.coords, v.components))


def manifold_from_spec(spec):
    """Build a manifold from a short textual tag (``"sphere2"``, ``"euclidean:3"``, ``"kendall:50"``)."""
    name, _, arg = str(spec).lower().partition(":")
    if name in ("sphere", "sphere2", "s2"):
        return Sphere2()
    if name in ("hyperbolic", "hyperbolic2", "h2"):
        return Hyperbolic2()
    if name in ("euclidean", "r"):
        return Euclidean(int(arg or 1))
    if name in ("kendall", "kendallshape"):
        return KendallShape(int(arg))
    raise ValidationError(f"unknown manifold {spec!r}")
