"""First-principles hydrostatics for a floating polyhedral hull.

Computes the equilibrium immersion, center of buoyancy and dynamic
metacenter of a closed triangle mesh at a given attitude. Everything is
expressed in the body frame: x forward, y port, z up, origin wherever the
mesh puts it (the geometric center for box hulls).

Conventions
-----------
* Euler angles follow the intrinsic Z-Y-X (yaw, pitch, roll) marine/IMU
  convention. The world-up direction expressed in the body frame is then
  ``n = (-sin(pitch), cos(pitch)*sin(roll), cos(pitch)*cos(roll))`` and is
  independent of yaw, so all body-frame results are yaw-invariant.
* Lengths are meters and angles radians throughout, except
  :class:`MetacenterPosition`, which reports centimeters.
* The water plane in body coordinates is ``{p : p . n = c}``; points with
  ``p . n <= c`` are submerged. ``c`` is found by bisection so that the
  displaced mass equals the hull mass.
* The finite-angle (pro-)metacenter is the least-squares intersection of
  the buoyancy action lines at the given attitude and at the attitude
  perturbed by ``delta`` about the dominant tilt axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GeometryError, NumericalError

RHO_SEAWATER = 1025.0

# 0.1 degree, the perturbation used to construct the second action line.
DEFAULT_DELTA = 0.001745

# Sine of the angle below which action lines count as parallel.
_PARALLEL_TOL = 1e-6

_BISECT_ITERATIONS = 48
_MASS_TOL = 1e-3


@dataclass(frozen=True)
class AttitudeSample:
    """Timestamped vessel attitude: roll, pitch, yaw in radians."""

    t: float
    roll: float
    pitch: float
    yaw: float = 0.0


@dataclass(frozen=True)
class MetacenterPosition:
    """Metacenter coordinates in the body frame, centimeters."""

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(eq=False)
class HullSpec:
    """Closed, outward-oriented triangle mesh plus mass properties.

    vertices : (V, 3) float array, meters, body frame
    faces    : (F, 3) int array of vertex indices, outward winding
    mass     : kilograms
    water_density : kg/m^3
    cog      : (3,) center of gravity, body frame
    """

    vertices: np.ndarray
    faces: np.ndarray
    mass: float
    water_density: float = RHO_SEAWATER
    cog: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.cog = np.asarray(self.cog, dtype=float)
        self.validate()

    def validate(self) -> None:
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise GeometryError("vertices must be an (V, 3) array")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise GeometryError("faces must be an (F, 3) array of indices")
        if self.faces.min(initial=0) < 0 or self.faces.max(initial=-1) >= len(self.vertices):
            raise GeometryError("face index out of range")
        if not np.isfinite(self.vertices).all():
            raise GeometryError("non-finite vertex coordinates")

        # Closed + consistently oriented: every directed edge must appear
        # exactly once, paired with its reverse.
        edges = {}
        for tri in self.faces:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (int(a), int(b))
                if key in edges:
                    raise GeometryError(f"directed edge {key} repeated; mesh not manifold")
                edges[key] = True
        for a, b in edges:
            if (b, a) not in edges:
                raise GeometryError(f"edge ({a}, {b}) has no opposite twin; mesh not closed")

        vol = self.volume()
        if vol <= 0.0:
            raise GeometryError(f"signed mesh volume {vol:.6g} m^3 is not positive; check winding")
        if self.mass <= 0.0:
            raise ConfigurationError("hull mass must be positive")
        if self.mass / self.water_density >= vol:
            raise ConfigurationError(
                f"hull would sink: mass {self.mass:.6g} kg exceeds maximum displacement "
                f"{self.water_density * vol:.6g} kg"
            )

    def volume(self) -> float:
        """Signed enclosed volume via tetrahedra rooted at the origin."""
        p = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


@dataclass(eq=False)
class HullState:
    """Hydrostatic solution at one attitude.

    ``metacenter`` and ``metacenter_position`` are None when only the
    equilibrium has been solved.
    """

    attitude: AttitudeSample
    draft: float
    displaced_volume: float
    buoyancy_center: np.ndarray
    gravity_center: np.ndarray
    metacenter: np.ndarray | None = None
    metacenter_position: MetacenterPosition | None = None


def make_box_hull(length: float, beam: float, depth: float, mass: float,
                  water_density: float = RHO_SEAWATER) -> HullSpec:
    """Closed 12-triangle box hull centered on the origin, cog at center."""
    if min(length, beam, depth) <= 0.0:
        raise ConfigurationError("box dimensions must be positive")
    hx, hy, hz = length / 2.0, beam / 2.0, depth / 2.0
    vertices = np.array([
        [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
        [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
    ])
    faces = np.array([
        [0, 2, 1], [0, 3, 2],      # bottom (z = -hz), outward -z
        [4, 5, 6], [4, 6, 7],      # top, outward +z
        [0, 1, 5], [0, 5, 4],      # y = -hy side
        [2, 3, 7], [2, 7, 6],      # y = +hy side
        [1, 2, 6], [1, 6, 5],      # x = +hx side
        [3, 0, 4], [3, 4, 7],      # x = -hx side
    ])
    return HullSpec(vertices=vertices, faces=faces, mass=mass,
                    water_density=water_density, cog=np.zeros(3))


def default_hull() -> HullSpec:
    """Default test vessel: 9.5 m x 2.4 m x 1.2 m box, 5000 kg, seawater."""
    return make_box_hull(9.5, 2.4, 1.2, 5000.0)


def load_hull(path: str | Path) -> HullSpec:
    """Read a hull from JSON: explicit mesh or ``{"box": ..., "mass_kg": ...}``."""
    try:
        spec = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read hull file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"hull file {path} is not valid JSON: {exc}") from exc
    try:
        density = float(spec.get("water_density", RHO_SEAWATER))
        if "box" in spec:
            box = spec["box"]
            return make_box_hull(float(box["length"]), float(box["beam"]),
                                 float(box["depth"]), float(spec["mass_kg"]), density)
        return HullSpec(
            vertices=np.asarray(spec["vertices"], dtype=float),
            faces=np.asarray(spec["faces"], dtype=np.int64),
            mass=float(spec["mass_kg"]),
            water_density=density,
            cog=np.asarray(spec.get("cog", [0.0, 0.0, 0.0]), dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"hull file {path} is missing or has malformed fields: {exc}") from exc


# ---------------------------------------------------------------------------
# attitude geometry
# ---------------------------------------------------------------------------

def check_attitude_bounds(roll: np.ndarray | float, pitch: np.ndarray | float) -> None:
    limit = math.pi / 2.0
    if np.any(np.abs(roll) >= limit) or np.any(np.abs(pitch) >= limit):
        raise ConfigurationError("attitude out of range: |roll| and |pitch| must stay below pi/2")


def vertical_in_body_frame(roll: np.ndarray | float, pitch: np.ndarray | float) -> np.ndarray:
    """World-up unit vector expressed in body coordinates; yaw drops out."""
    roll = np.asarray(roll, dtype=float)
    pitch = np.asarray(pitch, dtype=float)
    n = np.stack([-np.sin(pitch),
                  np.cos(pitch) * np.sin(roll),
                  np.cos(pitch) * np.cos(roll)], axis=-1)
    return n


def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Body-to-world rotation, intrinsic Z-Y-X (yaw, pitch, roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


# ---------------------------------------------------------------------------
# mesh clipping against the water plane
# ---------------------------------------------------------------------------

# Vertex rotation that moves each below-pattern into canonical position:
# one-below rows want the submerged vertex first, two-below rows want the
# emerged vertex last. Index is the 3-bit below mask.
_ROT_FOR_MASK = np.array([0, 0, 1, 0, 2, 2, 1, 0])


class _PlaneClipper:
    """Clips a triangle mesh against one water plane per sample.

    The per-sample plane normals are fixed at construction so that repeated
    calls during bisection only redo the offset-dependent arithmetic.
    Submerged volume and centroid come from signed tetrahedra rooted at each
    sample's closest plane point; the cut face is coplanar with that root and
    contributes nothing, so it never needs to be built.
    """

    def __init__(self, verts: np.ndarray, faces: np.ndarray, normals: np.ndarray):
        n_s = len(normals)
        n_f = len(faces)
        self.normals = normals
        self.proj = verts @ normals.T                                   # (V, S)
        self.pv = np.ascontiguousarray(
            np.moveaxis(self.proj[faces], 2, 0).reshape(n_s * n_f, 3))  # (S*F, 3)
        self.pts = np.broadcast_to(
            verts[faces], (n_s, n_f, 3, 3)).reshape(n_s * n_f, 3, 3).copy()
        self.sid = np.repeat(np.arange(n_s), n_f)
        self.n_samples = n_s

    def _groups(self, offsets: np.ndarray):
        dv = self.pv - offsets[self.sid][:, None]
        below = dv <= 0.0
        mask = below[:, 0] + 2 * below[:, 1] + 4 * below[:, 2]

        full = np.flatnonzero(mask == 7)
        cut = np.flatnonzero((mask != 0) & (mask != 7))
        rot = _ROT_FOR_MASK[mask[cut]]
        idx = (rot[:, None] + np.arange(3)[None, :]) % 3
        r = np.take_along_axis(self.pts[cut], idx[:, :, None], axis=1)
        d = np.take_along_axis(dv[cut], idx, axis=1)
        one = np.isin(mask[cut], (1, 2, 4))
        return full, cut, r, d, one

    @staticmethod
    def _one_below_points(r, d):
        """Plane crossings (q01, q20) of rows with exactly one vertex below."""
        t01 = (d[:, 0] / (d[:, 0] - d[:, 1]))[:, None]
        t20 = (d[:, 0] / (d[:, 0] - d[:, 2]))[:, None]
        q01 = r[:, 0] + (r[:, 1] - r[:, 0]) * t01
        q20 = r[:, 0] + (r[:, 2] - r[:, 0]) * t20
        return q01, q20

    @staticmethod
    def _two_below_points(r, d):
        """Plane crossings (q12, q20) of rows with exactly two vertices below."""
        t12 = (d[:, 1] / (d[:, 1] - d[:, 2]))[:, None]
        t20 = (d[:, 2] / (d[:, 2] - d[:, 0]))[:, None]
        q12 = r[:, 1] + (r[:, 2] - r[:, 1]) * t12
        q20 = r[:, 2] + (r[:, 0] - r[:, 2]) * t20
        return q12, q20

    def submerged(self, offsets: np.ndarray, want_centroids: bool):
        """Per-sample submerged volume (and centroid when requested)."""
        full, cut, r, d, one = self._groups(offsets)
        two = ~one
        q01, q20_one = self._one_below_points(r[one], d[one])
        q12, q20_two = self._two_below_points(r[two], d[two])

        # Submerged polygon of a one-below row is the corner triangle
        # (p0, q01, q20); a two-below row yields the quad (p0, p1, q12, q20)
        # split into two triangles. Winding follows the parent face.
        tri_a = np.concatenate([self.pts[full][:, 0], r[one][:, 0],
                                r[two][:, 0], r[two][:, 0]])
        tri_b = np.concatenate([self.pts[full][:, 1], q01, r[two][:, 1], q12])
        tri_c = np.concatenate([self.pts[full][:, 2], q20_one, q12, q20_two])
        sid = np.concatenate([self.sid[full], self.sid[cut][one],
                              self.sid[cut][two], self.sid[cut][two]])

        origin = offsets[:, None] * self.normals
        oa = tri_a - origin[sid]
        ob = tri_b - origin[sid]
        oc = tri_c - origin[sid]
        tet_vol = np.einsum("ij,ij->i", oa, np.cross(ob, oc)) / 6.0
        vols = np.bincount(sid, weights=tet_vol, minlength=self.n_samples)

        if not want_centroids:
            return vols, None

        tet_cent = (tri_a + tri_b + tri_c + origin[sid]) / 4.0
        weighted = tet_vol[:, None] * tet_cent
        cents = np.stack([np.bincount(sid, weights=weighted[:, k], minlength=self.n_samples)
                          for k in range(3)], axis=1)
        safe = np.where(vols > 0.0, vols, 1.0)
        return vols, cents / safe[:, None]

    def cut_segments(self, offsets: np.ndarray):
        """Directed waterline segments (K, 2, 3), wound with the mesh faces."""
        _, cut, r, d, one = self._groups(offsets)
        two = ~one
        parts = []
        if one.any():
            q01, q20 = self._one_below_points(r[one], d[one])
            parts.append(np.stack([q01, q20], axis=1))
        if two.any():
            q12, q20 = self._two_below_points(r[two], d[two])
            parts.append(np.stack([q12, q20], axis=1))
        if not parts:
            return np.zeros((0, 2, 3))
        return np.concatenate(parts)


def submerged_volume_centroid(hull: HullSpec, normal: np.ndarray,
                              offset: float) -> tuple[float, np.ndarray]:
    """Volume and centroid of the hull below the plane ``p . normal = offset``."""
    clipper = _PlaneClipper(hull.vertices, hull.faces,
                            np.asarray(normal, dtype=float)[None, :])
    vols, cents = clipper.submerged(np.array([float(offset)]), True)
    return float(vols[0]), cents[0]


def waterplane_properties(hull: HullSpec, normal: np.ndarray, offset: float,
                          tilt_direction: np.ndarray):
    """Area, centroid and second moment of the waterplane cross-section.

    The second moment is taken about the centroidal axis parallel to
    ``tilt_direction`` projected into the plane.
    """
    normal = np.asarray(normal, dtype=float)
    clipper = _PlaneClipper(hull.vertices, hull.faces, normal[None, :])
    segs = clipper.cut_segments(np.array([float(offset)]))
    if len(segs) == 0:
        raise GeometryError("plane does not intersect the hull; no waterplane section")

    e1 = np.asarray(tilt_direction, dtype=float)
    e1 = e1 - (e1 @ normal) * normal
    norm = np.linalg.norm(e1)
    if norm < 1e-12:
        raise GeometryError("tilt direction is parallel to the plane normal")
    e1 /= norm
    e2 = np.cross(normal, e1)

    origin = float(offset) * normal
    rel_s = segs[:, 0] - origin
    rel_e = segs[:, 1] - origin
    us, vs = rel_s @ e1, rel_s @ e2
    ue, ve = rel_e @ e1, rel_e @ e2

    cross = us * ve - ue * vs
    area = cross.sum() / 2.0
    if area == 0.0:
        raise GeometryError("degenerate waterplane section")
    cu = ((us + ue) * cross).sum() / (6.0 * area)
    cv = ((vs + ve) * cross).sum() / (6.0 * area)
    i_axis = ((vs * vs + vs * ve + ve * ve) * cross).sum() / 12.0
    if area < 0.0:
        area, i_axis = -area, -i_axis
    i_tilt = i_axis - area * cv * cv
    centroid = origin + cu * e1 + cv * e2
    return area, centroid, i_tilt


# ---------------------------------------------------------------------------
# equilibrium and metacenter
# ---------------------------------------------------------------------------

def _solve_offsets(hull: HullSpec, normals: np.ndarray):
    """Bisect the plane offset per sample until displaced mass equals hull mass.

    A fixed iteration count keeps the result bit-identical regardless of how
    samples are batched.
    """
    clipper = _PlaneClipper(hull.vertices, hull.faces, normals)
    lo = clipper.proj.min(axis=0)
    hi = clipper.proj.max(axis=0)
    target = hull.mass / hull.water_density
    for _ in range(_BISECT_ITERATIONS):
        mid = 0.5 * (lo + hi)
        vols, _ = clipper.submerged(mid, False)
        under = vols < target
        lo = np.where(under, mid, lo)
        hi = np.where(under, hi, mid)
    offsets = 0.5 * (lo + hi)
    vols, cents = clipper.submerged(offsets, True)
    mismatch = np.abs(vols * hull.water_density - hull.mass) / hull.mass
    if np.any(mismatch > _MASS_TOL):
        worst = float(mismatch.max())
        raise NumericalError(
            f"equilibrium bisection did not converge within {_BISECT_ITERATIONS} "
            f"iterations: relative mass error {worst:.3e}")
    return offsets, vols, cents


def solve_equilibrium_draft(hull: HullSpec, attitude: AttitudeSample) -> HullState:
    """Equilibrium immersion at one attitude: draft, volume, buoyancy center."""
    check_attitude_bounds(attitude.roll, attitude.pitch)
    n = vertical_in_body_frame(attitude.roll, attitude.pitch)[None, :]
    offsets, vols, cents = _solve_offsets(hull, n)
    draft = float(offsets[0] - (hull.vertices @ n[0]).min())
    return HullState(
        attitude=attitude,
        draft=draft,
        displaced_volume=float(vols[0]),
        buoyancy_center=cents[0],
        gravity_center=hull.cog.copy(),
    )


def _metacenter_arrays(hull: HullSpec, roll: np.ndarray, pitch: np.ndarray,
                       delta: float):
    """Vectorized metacenter solve. Returns (M (S,3), offsets, vols, cents)."""
    check_attitude_bounds(roll, pitch)
    n_s = len(roll)
    roll_dominant = np.abs(roll) >= np.abs(pitch)
    # Perturb along the signed tilt axis (away from upright; +delta when
    # level) so that mirrored attitudes produce mirrored constructions.
    d_roll = delta * np.where(roll < 0.0, -1.0, 1.0)
    d_pitch = delta * np.where(pitch < 0.0, -1.0, 1.0)
    roll2 = np.where(roll_dominant, roll + d_roll, roll)
    pitch2 = np.where(roll_dominant, pitch, pitch + d_pitch)
    check_attitude_bounds(roll2, pitch2)

    n1 = vertical_in_body_frame(roll, pitch)
    n2 = vertical_in_body_frame(roll2, pitch2)
    offsets, vols, cents = _solve_offsets(hull, np.concatenate([n1, n2]))
    b1, b2 = cents[:n_s], cents[n_s:]

    w0 = b2 - b1
    dot12 = np.einsum("ij,ij->i", n1, n2)
    d1 = np.einsum("ij,ij->i", n1, w0)
    d2 = np.einsum("ij,ij->i", n2, w0)
    denom = 1.0 - dot12 * dot12
    sin_angle = np.linalg.norm(np.cross(n1, n2), axis=1)

    parallel = sin_angle < _PARALLEL_TOL
    safe_denom = np.where(parallel, 1.0, denom)
    s = (d1 - dot12 * d2) / safe_denom
    t = (dot12 * d1 - d2) / safe_denom
    meta = 0.5 * (b1 + s[:, None] * n1 + b2 + t[:, None] * n2)

    if np.any(parallel):
        # Small-angle fallback: M = B + (I_t / V) n, with the waterplane
        # second moment about the dominant tilt axis.
        for i in np.nonzero(parallel)[0]:
            tilt = np.array([1.0, 0.0, 0.0]) if roll_dominant[i] else np.array([0.0, 1.0, 0.0])
            _, _, i_tilt = waterplane_properties(hull, n1[i], offsets[i], tilt)
            meta[i] = b1[i] + (i_tilt / vols[i]) * n1[i]

    return meta, offsets[:n_s], vols[:n_s], b1


def compute_metacenter(hull: HullSpec, attitude: AttitudeSample,
                       delta: float = DEFAULT_DELTA) -> HullState:
    """Full hydrostatic state including the dynamic metacenter (cm output)."""
    meta, offsets, vols, cents = _metacenter_arrays(
        hull, np.array([attitude.roll]), np.array([attitude.pitch]), delta)
    n = vertical_in_body_frame(attitude.roll, attitude.pitch)
    draft = float(offsets[0] - (hull.vertices @ n).min())
    m = meta[0]
    if not np.isfinite(m).all():
        raise NumericalError("metacenter solve produced non-finite coordinates")
    return HullState(
        attitude=attitude,
        draft=draft,
        displaced_volume=float(vols[0]),
        buoyancy_center=cents[0],
        gravity_center=hull.cog.copy(),
        metacenter=m,
        metacenter_position=MetacenterPosition(m[0] * 100.0, m[1] * 100.0, m[2] * 100.0),
    )


def metacenter_batch(hull: HullSpec, roll: np.ndarray, pitch: np.ndarray,
                     yaw: np.ndarray | None = None,
                     delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Metacenter positions in centimeters for arrays of attitudes.

    Yaw is accepted for interface symmetry but cannot influence the
    body-frame result. Bit-identical to per-sample :func:`compute_metacenter`.
    """
    roll = np.asarray(roll, dtype=float)
    pitch = np.asarray(pitch, dtype=float)
    meta, _, _, _ = _metacenter_arrays(hull, roll, pitch, delta)
    if not np.isfinite(meta).all():
        raise NumericalError("metacenter solve produced non-finite coordinates")
    return meta * 100.0
