"""Surface gradients of wall-face quantities on unstructured near-wall meshes.

Wall-face scalars are broadcast to the off-wall cells nearest to each
face, differentiated there with a Green-Gauss cell gradient, sampled at
the matching location and projected onto the face's local axes.  Two
documented failure modes are reproducible here: a local frame that
turns between neighbouring faces, and near-wall cells whose neighbours
all inherit the same face value.  ``global_vector`` mode fixes the
first; ``spatial_filter`` mitigates the second.

Conventions: ``unit_normal`` is the outward normal of the fluid domain
(it points into the wall) and ``local_x x local_z == unit_normal``.
The matching location of a face sits at ``centroid - h_wm * unit_normal``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigurationError, InvalidMeshError
from .iwm import IntegralGradients

TERM_NAMES = ("l_x", "l_z", "l_xx", "l_zz", "l_xz")
GRADIENT_COLUMNS = tuple(f"d{t}_d{d}" for t in TERM_NAMES for d in ("x", "z"))


class Frame(enum.Enum):
    LOCAL_X = "local_x"
    LOCAL_Z = "local_z"
    FRAME_FREE = "frame_free"


class Direction(enum.Enum):
    LOCAL_X = "local_x"
    LOCAL_Z = "local_z"


class GradientMode(enum.Enum):
    NAIVE = "naive"
    GLOBAL_VECTOR = "global-vector"


@dataclass(frozen=True)
class WallFace:
    id: int
    centroid: np.ndarray
    unit_normal: np.ndarray
    local_x: np.ndarray
    local_z: np.ndarray
    area: float

    def __post_init__(self):
        for name in ("centroid", "unit_normal", "local_x", "local_z"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise InvalidMeshError(f"wall face {self.id}: {name} must be a 3-vector")
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        if not self.area > 0.0:
            raise InvalidMeshError(f"wall face {self.id}: area must be positive")
        basis = np.array([self.local_x, self.local_z, self.unit_normal])
        if not np.allclose(basis @ basis.T, np.eye(3), atol=1e-10):
            raise InvalidMeshError(f"wall face {self.id}: basis is not orthonormal")
        if not np.allclose(np.cross(self.local_x, self.local_z), self.unit_normal, atol=1e-10):
            raise InvalidMeshError(f"wall face {self.id}: basis is not right-handed")

    @property
    def basis(self) -> np.ndarray:
        """Rows are local_x and local_z."""
        return np.array([self.local_x, self.local_z])


@dataclass(frozen=True)
class CellFace:
    area_vector: np.ndarray
    neighbor: int | None = None  # None marks a boundary face


@dataclass(frozen=True)
class Cell:
    id: int
    centroid: np.ndarray
    volume: float
    faces: tuple[CellFace, ...]

    def closure_defect(self) -> float:
        total = sum(float(np.linalg.norm(f.area_vector)) for f in self.faces)
        net = np.sum([f.area_vector for f in self.faces], axis=0)
        return float(np.linalg.norm(net)) / total


@dataclass(frozen=True)
class Mesh:
    """Wall faces, off-wall cells and the wall-face adjacency graph.

    Face and cell ids must equal their position in the respective tuple.
    """

    wall_faces: tuple[WallFace, ...]
    cells: tuple[Cell, ...]
    face_neighbors: tuple[tuple[int, ...], ...]
    _gradient_operator: sparse.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.face_neighbors) != len(self.wall_faces):
            raise InvalidMeshError("face_neighbors must list one entry per wall face")
        for i, f in enumerate(self.wall_faces):
            if f.id != i:
                raise InvalidMeshError(f"wall face at position {i} has id {f.id}")
        n_faces = len(self.wall_faces)
        for i, nbrs in enumerate(self.face_neighbors):
            for j in nbrs:
                if not 0 <= j < n_faces or j == i or i not in self.face_neighbors[j]:
                    raise InvalidMeshError(f"wall-face adjacency of face {i} is not symmetric")
        n_cells = len(self.cells)
        for i, c in enumerate(self.cells):
            if c.id != i:
                raise InvalidMeshError(f"cell at position {i} has id {c.id}")
            for f in c.faces:
                if f.neighbor is not None and not 0 <= f.neighbor < n_cells:
                    raise InvalidMeshError(f"cell {i} references unknown neighbour {f.neighbor}")
            if c.closure_defect() > 1e-12:
                raise InvalidMeshError(f"cell {i} is not closed")

    @property
    def n_faces(self) -> int:
        return len(self.wall_faces)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def gradient_operator(self) -> sparse.csr_matrix:
        """Sparse (3 n_cells, n_cells) Green-Gauss operator, built once."""
        if self._gradient_operator is None:
            object.__setattr__(self, "_gradient_operator", _assemble_green_gauss(self))
        return self._gradient_operator


@dataclass(frozen=True)
class FaceCellMap:
    cell_to_face: np.ndarray
    distances: np.ndarray

    def cells_of(self, face_id: int) -> np.ndarray:
        return np.flatnonzero(self.cell_to_face == face_id)


@dataclass(frozen=True)
class WallScalarField:
    values: np.ndarray
    frame: Frame = Frame.FRAME_FREE

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "frame", Frame(self.frame))


@dataclass
class GradientBundle:
    """Per-face derivatives: ``values[f]`` follows ``GRADIENT_COLUMNS``."""

    values: np.ndarray

    def for_face(self, face_id: int) -> IntegralGradients:
        # IntegralGradients uses the same column order
        return IntegralGradients(*(float(v) for v in self.values[face_id]))


# --------------------------------------------------------------------------
# mapping and Green-Gauss


def build_face_cell_map(mesh: Mesh) -> FaceCellMap:
    """Assign every cell to the wall face with the nearest centroid (lowest id on ties)."""
    if mesh.n_faces == 0:
        raise ConfigurationError("mesh has no wall faces")
    fc = np.array([f.centroid for f in mesh.wall_faces])
    cc = np.array([c.centroid for c in mesh.cells]).reshape(-1, 3)
    d = np.linalg.norm(cc[:, None, :] - fc[None, :, :], axis=2)
    idx = np.argmin(d, axis=1)  # first minimum, so ties resolve to the lowest id
    return FaceCellMap(idx, d[np.arange(len(idx)), idx])


def broadcast_wall_scalars(values, fmap: FaceCellMap) -> np.ndarray:
    """Cell field carrying the value of each cell's assigned face."""
    if isinstance(values, WallScalarField):
        values = values.values
    return np.asarray(values, dtype=float)[fmap.cell_to_face]


def _assemble_green_gauss(mesh: Mesh) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for c in mesh.cells:
        if not c.volume > 0.0:
            raise InvalidMeshError(f"cell {c.id} has non-positive volume")
        for f in c.faces:
            a = np.asarray(f.area_vector, dtype=float) / c.volume
            if f.neighbor is None:
                pairs = ((c.id, 1.0),)
            else:
                pairs = ((c.id, 0.5), (f.neighbor, 0.5))
            for col, wgt in pairs:
                for k in range(3):
                    rows.append(3 * c.id + k)
                    cols.append(col)
                    vals.append(wgt * a[k])
    n = mesh.n_cells
    return sparse.csr_matrix((vals, (rows, cols)), shape=(3 * n, n))


def green_gauss_gradient(cell_field, mesh: Mesh) -> np.ndarray:
    """Green-Gauss cell gradients, shape (n_cells, 3).

    Interior face values are the arithmetic mean of the two adjacent
    cells; boundary faces take the owner's value.
    """
    phi = np.asarray(cell_field, dtype=float)
    if phi.shape != (mesh.n_cells,):
        raise ValueError(f"expected {mesh.n_cells} cell values, got shape {phi.shape}")
    return (mesh.gradient_operator() @ phi).reshape(-1, 3)


def project_to_local(gradient, face: WallFace, direction: Direction) -> float:
    axis = face.local_x if Direction(direction) is Direction.LOCAL_X else face.local_z
    return float(np.dot(gradient, axis))


# --------------------------------------------------------------------------
# pipeline


def matching_weights(mesh: Mesh, fmap: FaceCellMap, h_wm: float, n_interp: int = 1):
    """Per-face (cell ids, weights) for inverse-distance sampling at the matching point.

    Candidate cells are those mapped to the face; if none are, all cells
    are candidates.  A cell whose centroid coincides with the matching
    point receives the full weight.
    """
    cc = np.array([c.centroid for c in mesh.cells])
    out = []
    for f in mesh.wall_faces:
        p = f.centroid - h_wm * f.unit_normal
        cand = fmap.cells_of(f.id)
        if cand.size == 0:
            cand = np.arange(mesh.n_cells)
        d = np.linalg.norm(cc[cand] - p, axis=1)
        order = np.argsort(d, kind="stable")[:n_interp]
        ids, d = cand[order], d[order]
        if d[0] <= 1e-12 * max(h_wm, 1.0):
            out.append((ids[:1], np.ones(1)))
        else:
            w = 1.0 / d
            out.append((ids, w / w.sum()))
    return out


def _sample(cell_grads: np.ndarray, weights) -> np.ndarray:
    return np.array([w @ cell_grads[ids] for ids, w in weights])


def _check_fields(fields) -> dict[str, np.ndarray]:
    missing = [t for t in TERM_NAMES if t not in fields]
    if missing:
        raise ConfigurationError(f"missing integral fields: {missing}")
    out = {}
    for t in TERM_NAMES:
        f = fields[t]
        out[t] = f.values if isinstance(f, WallScalarField) else np.asarray(f, dtype=float)
    if isinstance(fields["l_x"], WallScalarField) and fields["l_x"].frame is Frame.LOCAL_Z:
        raise ConfigurationError("l_x must not be tagged local_z")
    return out


@dataclass(frozen=True)
class CellGradients:
    """Green-Gauss gradients of the broadcast wall variables, one (n_cells, 3) array each.

    Naive mode keys are ``TERM_NAMES``; global-vector mode keys are
    ``v<i>`` for the vector components and ``t<i><j>`` (i <= j) for the
    tensor components, all in global axes.
    """

    mode: GradientMode
    grads: dict


def cell_gradients(fields, mesh: Mesh, fmap: FaceCellMap, mode=GradientMode.NAIVE) -> CellGradients:
    """Broadcast the five integral terms to cells and take their cell gradients.

    In ``global-vector`` mode (L_x, L_z) is first rebuilt as a global
    3-vector and (L_xx, L_xz, L_zz) as a global tensor, so the
    broadcast quantities no longer depend on each face's frame.
    """
    vals = _check_fields(fields)
    mode = GradientMode(mode)

    def grad(face_values):
        return green_gauss_gradient(broadcast_wall_scalars(face_values, fmap), mesh)

    if mode is GradientMode.NAIVE:
        return CellGradients(mode, {t: grad(vals[t]) for t in TERM_NAMES})
    basis = np.array([f.basis for f in mesh.wall_faces])  # (F, 2, 3)
    vec_local = np.stack([vals["l_x"], vals["l_z"]], axis=1)
    ten_local = np.empty((mesh.n_faces, 2, 2))
    ten_local[:, 0, 0] = vals["l_xx"]
    ten_local[:, 1, 1] = vals["l_zz"]
    ten_local[:, 0, 1] = ten_local[:, 1, 0] = vals["l_xz"]
    vec_g = np.einsum("fa,fai->fi", vec_local, basis)
    ten_g = np.einsum("fab,fai,fbj->fij", ten_local, basis, basis)
    grads = {f"v{i}": grad(vec_g[:, i]) for i in range(3)}
    for i in range(3):
        for j in range(i, 3):
            grads[f"t{i}{j}"] = grad(ten_g[:, i, j])
    return CellGradients(mode, grads)


def face_gradients(cg: CellGradients, mesh: Mesh, fmap: FaceCellMap, h_wm: float, n_interp: int = 1) -> GradientBundle:
    """Sample cell gradients at each matching point and project onto the face axes."""
    weights = matching_weights(mesh, fmap, h_wm, n_interp)
    basis = np.array([f.basis for f in mesh.wall_faces])
    n_f = mesh.n_faces
    out = np.empty((n_f, 10))
    if cg.mode is GradientMode.NAIVE:
        for k, t in enumerate(TERM_NAMES):
            g = _sample(cg.grads[t], weights)
            out[:, 2 * k : 2 * k + 2] = np.einsum("fi,fdi->fd", g, basis)
        return GradientBundle(out)
    dvec = np.stack([_sample(cg.grads[f"v{i}"], weights) for i in range(3)], axis=1)
    dten = np.empty((n_f, 3, 3, 3))
    for i in range(3):
        for j in range(i, 3):
            dten[:, i, j, :] = dten[:, j, i, :] = _sample(cg.grads[f"t{i}{j}"], weights)
    dv_local = np.einsum("fai,fik,fdk->fad", basis, dvec, basis)  # (F, comp, dir)
    dt_local = np.einsum("fai,fbj,fijk,fdk->fabd", basis, basis, dten, basis)
    out[:, 0:2] = dv_local[:, 0, :]
    out[:, 2:4] = dv_local[:, 1, :]
    out[:, 4:6] = dt_local[:, 0, 0, :]
    out[:, 6:8] = dt_local[:, 1, 1, :]
    out[:, 8:10] = dt_local[:, 0, 1, :]
    return GradientBundle(out)


def surface_gradients(
    fields,
    mesh: Mesh,
    fmap: FaceCellMap,
    h_wm: float,
    mode: GradientMode | str = GradientMode.NAIVE,
    n_interp: int = 1,
) -> GradientBundle:
    """Local-frame derivatives of the five integral terms at every wall face.

    ``fields`` maps each name in ``TERM_NAMES`` to per-face values in
    that face's local frame.  Runs broadcast, Green-Gauss, sampling at
    the matching location and projection in sequence.
    """
    return face_gradients(cell_gradients(fields, mesh, fmap, mode), mesh, fmap, h_wm, n_interp)


def spatial_filter(bundle: GradientBundle, mesh: Mesh, passes: int = 1) -> GradientBundle:
    """Average each face's derivatives with its edge-adjacent wall faces.

    Each pass applies ``g_i += w * sum_j (g_j - g_i)`` over neighbours j
    with ``w = 1 / (1 + max degree)``.  Where a face has the maximum
    number of neighbours this is the uniform average over the face and
    its neighbours; elsewhere the face keeps the remaining weight
    itself, so the patch mean is conserved exactly.
    """
    if passes < 0:
        raise ValueError("passes must be non-negative")
    g = np.array(bundle.values, dtype=float, copy=True)
    if passes == 0 or mesh.n_faces == 0:
        return GradientBundle(g)
    w = 1.0 / (1.0 + max(len(n) for n in mesh.face_neighbors))
    rows, cols = [], []
    for i, nbrs in enumerate(mesh.face_neighbors):
        rows.extend([i] * len(nbrs))
        cols.extend(nbrs)
    adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(mesh.n_faces,) * 2)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    for _ in range(passes):
        g = g + w * (adj @ g - deg[:, None] * g)
    return GradientBundle(g)


# --------------------------------------------------------------------------
# geometry helpers and scenarios


def _polygon_area_vector(pts: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.cross(pts, np.roll(pts, -1, axis=0)), axis=0)


def _polyhedron(faces_pts, neighbors, cid):
    """Cell from polygonal faces; area vectors are oriented outward."""
    ref = np.mean(np.vstack(faces_pts), axis=0)
    faces, vol, moment = [], 0.0, np.zeros(3)
    for pts, nb in zip(faces_pts, neighbors):
        pts = np.asarray(pts, dtype=float)
        a = _polygon_area_vector(pts)
        fc = pts.mean(axis=0)
        if np.dot(a, fc - ref) < 0.0:
            a = -a
        faces.append(CellFace(a, nb))
        # fan of tetrahedra from ref over the face triangles
        for k in range(1, len(pts) - 1):
            tri = np.array([pts[0], pts[k], pts[k + 1]])
            v = abs(np.dot(np.cross(tri[1] - tri[0], tri[2] - tri[0]), ref - tri[0])) / 6.0
            vol += v
            moment += v * (tri.sum(axis=0) + ref) / 4.0
    return Cell(cid, moment / vol, vol, tuple(faces))


def _box_faces(lo, hi):
    """Six quads of an axis-aligned box, ordered -x, +x, -y, +y, -z, +z."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    return [
        [(x0, y0, z0), (x0, y1, z0), (x0, y1, z1), (x0, y0, z1)],
        [(x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)],
        [(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)],
        [(x0, y1, z0), (x1, y1, z0), (x1, y1, z1), (x0, y1, z1)],
        [(x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0)],
        [(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)],
    ]


_WALL_NORMAL = np.array([0.0, -1.0, 0.0])
_EX = np.array([1.0, 0.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])


def _grid_neighbors(nx, nz, periodic):
    out = []
    for k in range(nz):
        for i in range(nx):
            nb = []
            for di, dk in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, kk = i + di, k + dk
                if periodic:
                    ii, kk = ii % nx, kk % nz
                elif not (0 <= ii < nx and 0 <= kk < nz):
                    continue
                j = kk * nx + ii
                if j != k * nx + i and j not in nb:
                    nb.append(j)
            out.append(tuple(sorted(nb)))
    return tuple(out)


def hex_patch(nx, nz, dx=1.0, dz=1.0, dy=1.0, periodic=False, frames=None, pyramid_column=None):
    """Flat wall at y = 0 with one layer of hex cells above it.

    Faces and cells are numbered ``k * nx + i``.  ``frames(i, k)`` may
    return a custom (local_x, local_z) pair.  ``periodic`` links
    opposite patch edges for both the cells and the wall-face graph.
    ``pyramid_column=(i, k)`` splits that column's hex into six
    pyramids meeting at its centre; the one on the wall takes the
    column's id and the rest are appended.
    """
    faces = []
    for k in range(nz):
        for i in range(nx):
            lx, lz = (_EX, _EZ) if frames is None else frames(i, k)
            faces.append(
                WallFace(
                    k * nx + i,
                    np.array([(i + 0.5) * dx, 0.0, (k + 0.5) * dz]),
                    _WALL_NORMAL,
                    lx,
                    lz,
                    dx * dz,
                )
            )

    def cid(i, k):
        if periodic:
            return (k % nz) * nx + (i % nx)
        return k * nx + i if 0 <= i < nx and 0 <= k < nz else None

    n_hex = nx * nz
    split = {}
    if pyramid_column is not None:
        pi, pk = pyramid_column
        base = cid(pi, pk)
        # order: -x, +x, -y (wall), +y, -z, +z
        ids = [n_hex, n_hex + 1, base, n_hex + 2, n_hex + 3, n_hex + 4]
        split = {base: ids}

    def neighbor_of(i, k, side):
        di, dk = {0: (-1, 0), 1: (1, 0), 4: (0, -1), 5: (0, 1)}[side]
        j = cid(i + di, k + dk)
        if j is not None and j in split:
            # the pyramid whose base faces back towards (i, k)
            return split[j][side ^ 1]
        return j

    cells = {}
    for k in range(nz):
        for i in range(nx):
            c = k * nx + i
            lo = (i * dx, 0.0, k * dz)
            hi = ((i + 1) * dx, dy, (k + 1) * dz)
            quads = _box_faces(lo, hi)
            if c not in split:
                nbrs = [neighbor_of(i, k, s) if s in (0, 1, 4, 5) else None for s in range(6)]
                cells[c] = _polyhedron(quads, nbrs, c)
                continue
            centre = tuple((np.array(lo) + np.array(hi)) / 2.0)
            ids = split[c]
            for s, quad in enumerate(quads):
                tri_faces, tri_nbrs = [quad], [neighbor_of(i, k, s) if s in (0, 1, 4, 5) else None]
                for e in range(4):
                    p, q = quad[e], quad[(e + 1) % 4]
                    tri_faces.append([p, q, centre])
                    # the other pyramid sharing edge p-q
                    other = next(
                        t for t, qq in enumerate(quads) if t != s and p in qq and q in qq
                    )
                    tri_nbrs.append(ids[other])
                cells[ids[s]] = _polyhedron(tri_faces, tri_nbrs, ids[s])
    cell_tuple = tuple(cells[j] for j in range(len(cells)))
    return Mesh(tuple(faces), cell_tuple, _grid_neighbors(nx, nz, periodic))


class ScenarioKind(enum.Enum):
    UNIFORM_HEX = "uniform-hex"
    ROTATED_JUNCTURE = "rotated-juncture"
    TET_FAN = "tet-fan"


@dataclass
class Scenario:
    """A test mesh with analytic global-frame integral fields.

    ``vector(p)`` returns the global (L_X, L_Z) pair and ``vector_grad(p)``
    its 2x2 derivative [component, direction] in the X-Z plane; likewise
    ``tensor`` / ``tensor_grad`` for (L_XX, L_XZ; L_XZ, L_ZZ).
    """

    kind: ScenarioKind
    mesh: Mesh
    h_wm: float
    vector: object
    vector_grad: object
    tensor: object
    tensor_grad: object
    focus_faces: tuple[int, ...] = ()
    defect_cell: int | None = None
    interior_faces: tuple[int, ...] = ()

    def local_fields(self) -> dict[str, WallScalarField]:
        """Per-face local-frame values of the five integral terms."""
        cols = {t: [] for t in TERM_NAMES}
        for f in self.mesh.wall_faces:
            b = f.basis[:, [0, 2]]  # local axes in global X-Z components
            v = b @ np.asarray(self.vector(f.centroid))
            t = b @ np.asarray(self.tensor(f.centroid)) @ b.T
            cols["l_x"].append(v[0])
            cols["l_z"].append(v[1])
            cols["l_xx"].append(t[0, 0])
            cols["l_zz"].append(t[1, 1])
            cols["l_xz"].append(t[0, 1])
        frames = {"l_x": Frame.LOCAL_X, "l_z": Frame.LOCAL_Z}
        return {t: WallScalarField(cols[t], frames.get(t, Frame.FRAME_FREE)) for t in TERM_NAMES}

    def analytic_gradients(self) -> GradientBundle:
        out = np.empty((self.mesh.n_faces, 10))
        for f in self.mesh.wall_faces:
            b = f.basis[:, [0, 2]]
            dv = np.einsum("ai,ik,dk->ad", b, np.asarray(self.vector_grad(f.centroid)), b)
            dt = np.einsum("ai,bj,ijk,dk->abd", b, b, np.asarray(self.tensor_grad(f.centroid)), b)
            out[f.id] = [*dv[0], *dv[1], *dt[0, 0], *dt[1, 1], *dt[0, 1]]
        return GradientBundle(out)


def _linear_fields(ax, az, bx, bz, base=(10.0, 2.0), tbase=(50.0, 5.0, 8.0)):
    """Linear global fields in X and Z."""

    def vector(p):
        return np.array([base[0] + ax * p[0] + az * p[2], base[1] + bx * p[0] + bz * p[2]])

    def vector_grad(p):
        return np.array([[ax, az], [bx, bz]])

    def tensor(p):
        xx = tbase[0] + 2.0 * ax * p[0]
        xz = tbase[1] + bx * p[0] + az * p[2]
        zz = tbase[2] + 2.0 * bz * p[2]
        return np.array([[xx, xz], [xz, zz]])

    def tensor_grad(p):
        g = np.zeros((2, 2, 2))
        g[0, 0] = [2.0 * ax, 0.0]
        g[0, 1] = g[1, 0] = [bx, az]
        g[1, 1] = [0.0, 2.0 * bz]
        return g

    return vector, vector_grad, tensor, tensor_grad


def _interior(nx, nz, margin=1):
    return tuple(
        k * nx + i for k in range(margin, nz - margin) for i in range(margin, nx - margin)
    )


def generate_scenario(kind, **params) -> Scenario:
    """Build a small deterministic test mesh with analytic reference fields.

    uniform-hex: ``nx``, ``nz`` (default 4), ``dx``, ``dz``, ``periodic``.
    rotated-juncture: ``nx`` (even, default 8), ``nz`` (default 4); faces
    with i < nx/2 have their local x axis along global Z, the others are
    aligned with X.
    tet-fan: ``n`` (odd, default 5); the centre column is split into six
    pyramids, so the wall pyramid and all its neighbours map to the
    same face.
    """
    kind = ScenarioKind(kind)
    try:
        if kind is ScenarioKind.UNIFORM_HEX:
            nx, nz = int(params.get("nx", 4)), int(params.get("nz", 4))
            dx, dz = float(params.get("dx", 1.0)), float(params.get("dz", 1.0))
            if nx < 1 or nz < 1 or dx <= 0 or dz <= 0:
                raise ConfigurationError("uniform-hex needs positive sizes")
            mesh = hex_patch(nx, nz, dx, dz, dy=dx, periodic=bool(params.get("periodic", False)))
            fields = _linear_fields(0.5, 0.25, -0.3, 0.4)
            return Scenario(kind, mesh, 0.5 * dx, *fields, interior_faces=_interior(nx, nz))
        if kind is ScenarioKind.ROTATED_JUNCTURE:
            nx, nz = int(params.get("nx", 8)), int(params.get("nz", 4))
            if nx < 2 or nx % 2 or nz < 1:
                raise ConfigurationError("rotated-juncture needs an even nx >= 2")
            half = nx // 2

            def frames(i, k):
                # face group 1 is turned by 90 degrees: local x along global Z
                return (_EZ, -_EX) if i < half else (_EX, _EZ)

            mesh = hex_patch(nx, nz, frames=frames)
            fields = _linear_fields(0.5, 0.25, -0.3, 0.4)
            rows = range(1, nz - 1) if nz > 2 else range(nz)
            focus = tuple(k * nx + i for k in rows for i in (half - 1, half))
            return Scenario(kind, mesh, 0.5, *fields, focus_faces=focus, interior_faces=_interior(nx, nz))
        if kind is ScenarioKind.TET_FAN:
            n = int(params.get("n", 5))
            if n < 5 or n % 2 == 0:
                raise ConfigurationError("tet-fan needs an odd n >= 5")
            c = n // 2
            mesh = hex_patch(n, n, pyramid_column=(c, c))
            fields = _linear_fields(1.0, 0.0, 0.0, 0.0)
            centre = c * n + c
            # the wall pyramid's centroid is a quarter of the way to the hex centre
            return Scenario(
                kind,
                mesh,
                0.125,
                *fields,
                focus_faces=(centre,),
                defect_cell=centre,
                interior_faces=_interior(n, n),
            )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from exc
    raise ConfigurationError(f"unknown scenario {kind!r}")  # pragma: no cover


# --------------------------------------------------------------------------
# text format and diagnostics


def _fmt(v) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(v))


def write_mesh(mesh: Mesh) -> str:
    """Serialise to the minimal line-oriented mesh format."""
    lines = [f"wallmesh 1 {mesh.n_faces} {mesh.n_cells}"]
    for f, nbrs in zip(mesh.wall_faces, mesh.face_neighbors):
        lines.append(
            f"face {f.id} {_fmt(f.centroid)} {_fmt(f.unit_normal)} "
            f"{_fmt(f.local_x)} {_fmt(f.local_z)} {float(f.area)!r} : {' '.join(map(str, nbrs))}"
        )
    for c in mesh.cells:
        lines.append(f"cell {c.id} {_fmt(c.centroid)} {float(c.volume)!r} {len(c.faces)}")
        for cf in c.faces:
            nb = "wall" if cf.neighbor is None else str(cf.neighbor)
            lines.append(f"  side {_fmt(cf.area_vector)} {nb}")
    return "\n".join(lines) + "\n"


def read_mesh(text: str) -> Mesh:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or rows[0][0] != "wallmesh":
        raise InvalidMeshError("missing wallmesh header")
    faces, nbrs, cells = [], [], []
    pos = 1
    try:
        while pos < len(rows):
            r = rows[pos]
            if r[0] == "face":
                colon = r.index(":")
                v = [float(x) for x in r[2:colon]]
                faces.append(WallFace(int(r[1]), v[0:3], v[3:6], v[6:9], v[9:12], v[12]))
                nbrs.append(tuple(int(x) for x in r[colon + 1 :]))
                pos += 1
            elif r[0] == "cell":
                n_sides = int(r[6])
                sides = []
                for s in rows[pos + 1 : pos + 1 + n_sides]:
                    if s[0] != "side":
                        raise InvalidMeshError("cell is missing side records")
                    sides.append(CellFace(np.array([float(x) for x in s[1:4]]), None if s[4] == "wall" else int(s[4])))
                cells.append(Cell(int(r[1]), np.array([float(x) for x in r[2:5]]), float(r[5]), tuple(sides)))
                pos += 1 + n_sides
            else:
                raise InvalidMeshError(f"unknown record {r[0]!r}")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, InvalidMeshError):
            raise
        raise InvalidMeshError(f"malformed mesh record near row {pos + 1}: {exc}") from exc
    return Mesh(tuple(faces), tuple(cells), tuple(nbrs))


def diagnostics_csv(computed: GradientBundle, reference: GradientBundle, mode) -> str:
    mode = GradientMode(mode).value
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["face_id", "mode", *GRADIENT_COLUMNS, *(f"ref_{c}" for c in GRADIENT_COLUMNS), "max_abs_error"])
    for fid, (g, r) in enumerate(zip(computed.values, reference.values)):
        w.writerow([fid, mode, *map(repr, map(float, g)), *map(repr, map(float, r)), repr(float(np.max(np.abs(g - r))))])
    return buf.getvalue()


def relative_error(computed: GradientBundle, reference: GradientBundle, faces, columns=None) -> float:
    """Max over ``faces`` of |computed - reference| / max |reference| on those faces."""
    cols = slice(None) if columns is None else list(columns)
    c = computed.values[list(faces)][:, cols]
    r = reference.values[list(faces)][:, cols]
    scale = np.max(np.abs(r))
    return float(np.max(np.abs(c - r)) / scale) if scale > 0 else float(np.max(np.abs(c)))

