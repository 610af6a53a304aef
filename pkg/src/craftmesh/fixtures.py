"""Small synthetic scenes shared by tests, acceptance checks and scripts."""
from __future__ import annotations

import numpy as np

from .mesh_core import TriMesh, grid_heightfield
from .sdf_boolean import extract_regions


def tent(x, width=0.2, height=0.1):
    return height * np.maximum(0.0, 1.0 - np.abs(x) / width)


def filleted_tent(x, width=0.2, height=0.1, radius=0.05):
    """Tent whose foot creases at ``|x| = width`` are rounded by quadratic fillets."""
    z = tent(x, width, height)
    u = np.abs(x) - width
    near = np.abs(u) < radius
    return np.where(near, (height / width) * (radius - u) ** 2 / (4 * radius), z)


def ridge_scene(n: int = 41, width: float = 0.2, height: float = 0.1, radius: float = 0.05,
                eps0: float = 0.1, eps1: float = 0.06, reference_n: int = 81):
    """Plane with a sharp tent ridge (merged mesh) and its filleted counterpart (reference).

    The seam is the pair of crease lines ``x = +-width``. Returns
    ``(mesh_t, mesh_e, regions)``.
    """
    mesh_t = grid_heightfield(n, n, lambda X, Y: tent(X, width, height))
    mesh_e = grid_heightfield(reference_n, reference_n, lambda X, Y: filleted_tent(X, width, height, radius))
    ys = np.linspace(-0.5, 0.5, 4 * n)
    seam = np.concatenate([np.stack([np.full_like(ys, s * width), ys, np.zeros_like(ys)], 1) for s in (-1, 1)])
    regions = extract_regions(mesh_t, mesh_e, seam, eps0, eps1)
    return mesh_t, mesh_e, regions


def bump_scene(n: int = 21, height: float = 0.1, eps0: float = 0.3, eps1: float = 0.2):
    """Plane with a smooth central bump against a flat reference plane."""
    bump = lambda X, Y: height * np.exp(-(X ** 2 + Y ** 2) / 0.02)
    mesh_t = grid_heightfield(n, n, bump)
    mesh_e = grid_heightfield(n, n, lambda X, Y: 0.0 * X)
    seam = np.zeros((1, 3))
    return mesh_t, mesh_e, extract_regions(mesh_t, mesh_e, seam, eps0, eps1)


def random_surface(rng: np.random.Generator, n: int = 6, amplitude: float = 0.1) -> TriMesh:
    """Jittered open heightfield with at most ``n*n`` vertices."""
    coeffs = rng.normal(size=4) * amplitude
    mesh = grid_heightfield(n, n, lambda X, Y: coeffs[0] * X * Y + coeffs[1] * np.sin(3 * X)
                            + coeffs[2] * Y ** 2 + coeffs[3] * X)
    V = mesh.vertices + rng.normal(scale=0.15 / n, size=mesh.vertices.shape)
    return TriMesh(V, mesh.faces)


def two_tone(size: int, cells: int = 8, a=(0.9, 0.2, 0.2), b=(0.2, 0.3, 0.9)) -> np.ndarray:
    """Checkerboard texture alternating two colors."""
    i, j = np.mgrid[0:size, 0:size]
    sel = ((i * cells // size) + (j * cells // size)) % 2 == 0
    return np.where(sel[..., None], np.asarray(a, float), np.asarray(b, float))


def two_tone_plane(n: int = 33, size: int = 128, half: float = 0.2, cell: int = 2,
                   base=(0.8, 0.55, 0.35), checker=(0.4, 0.6)):
    """Flat grid whose central square is a freshly textured new region.

    The preserved texture is a warm ramp; the new region carries a fine gray
    checkerboard (period ``2 * cell`` texels) of a very different tone.
    Returns ``(mesh, atlas, regions)``.
    """
    from .sdf_boolean import RegionSelection
    from .tex_harmon import TextureAtlas, build_correspondence

    mesh = grid_heightfield(n, n, lambda X, Y: 0.0 * X)
    corner = np.abs(mesh.vertices[mesh.faces]).max(1)
    new = np.flatnonzero((corner[:, 0] < half + 1e-9) & (corner[:, 1] < half + 1e-9))
    preserved = np.setdiff1d(np.arange(mesh.n_faces), new)
    regions = RegionSelection(np.zeros((0, 3)), [], [], [], 0.1, 0.05, new, preserved)
    i, j = np.mgrid[0:size, 0:size]
    img = np.empty((size, size, 3))
    img[:] = np.asarray(base, float) + 0.05 * (j / size)[..., None]
    label = build_correspondence(mesh, TextureAtlas(img), regions).label_image()
    chk = np.where((((i // cell) + (j // cell)) % 2 == 0)[..., None], checker[0], checker[1]) * np.ones(3)
    img[label == 1] = chk[label == 1]
    return mesh, TextureAtlas(img), regions


# ---------------------------------------------------------------------------
# staged end-to-end scenes


def _smooth_bump_reference(slab_lo, slab_hi, center, radius, k=0.06, resolution=64):
    """Closed mesh of a smooth union (polynomial smooth-min) of a box and a sphere."""
    from .sdf_boolean import SdfGrid, marching_cubes

    lo = np.minimum(slab_lo, np.asarray(center) - radius) - 0.1
    hi = np.maximum(slab_hi, np.asarray(center) + radius) + 0.1
    spacing = float((hi - lo).max()) / resolution
    dims = np.ceil((hi - lo) / spacing).astype(int) + 1
    axes = [lo[a] + spacing * np.arange(dims[a]) for a in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    P = np.stack([X, Y, Z], -1)
    c = 0.5 * (np.asarray(slab_lo) + np.asarray(slab_hi))
    h = 0.5 * (np.asarray(slab_hi) - np.asarray(slab_lo))
    q = np.abs(P - c) - h
    d_box = np.linalg.norm(np.maximum(q, 0), axis=-1) + np.minimum(q.max(-1), 0)
    d_sph = np.linalg.norm(P - np.asarray(center), axis=-1) - radius
    hh = np.clip(0.5 + 0.5 * (d_sph - d_box) / k, 0, 1)
    d = d_sph * (1 - hh) + d_box * hh - k * hh * (1 - hh)
    mesh, _ = marching_cubes(SdfGrid(lo, spacing, d))
    return mesh


def stage_bump_insert(root, workdir, *, instruction="add a bump", atlas_resolution=512,
                      grid_resolution=48, reference_resolution=128, iterations=100):
    """Stage a slab + spherical bump insert; returns the path of a run config.

    Original: a textured slab. ImageEdit returns renders of the smooth
    reference; MeshGen maps those to the smooth-union reference mesh and to a
    sphere (the edited region); TextureGen returns a blue checker sphere.
    """
    from pathlib import Path

    from .mesh_core import box, icosphere, save_mesh
    from .pipeline import (FilesystemBackend, Frame, TexturedMesh, per_face_layout, render_reference,
                           working_reference)
    from .tex_harmon import TextureAtlas

    root, workdir = Path(root), Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    slab_lo, slab_hi = np.array([-0.5, -0.5, -0.1]), np.array([0.5, 0.5, 0.0])
    slab = box(slab_lo, slab_hi)
    slab = TriMesh(slab.vertices, slab.faces, per_face_layout(slab.n_faces, atlas_resolution))
    i, j = np.mgrid[0:atlas_resolution, 0:atlas_resolution]
    tex = np.empty((atlas_resolution, atlas_resolution, 3))
    tex[:] = np.array([0.75, 0.5, 0.3]) + 0.1 * (j / atlas_resolution)[..., None]
    save_mesh(slab, workdir / "original.obj")
    np.save(workdir / "original_texture.npy", tex)

    center, radius = np.array([0.0, 0.0, -0.05]), 0.2
    sphere = icosphere(3, radius, center)
    reference = _smooth_bump_reference(slab_lo, slab_hi, center, radius)

    fs = FilesystemBackend(root)
    ref_img = working_reference(slab, reference_resolution)
    frame = Frame.unit_cube(slab)
    edited = render_reference(frame.forward(reference), reference_resolution)
    region = render_reference(frame.forward(sphere), reference_resolution)
    fs.stage_image_edit(ref_img, instruction, edited, region)
    fs.stage_mesh(edited, reference)
    fs.stage_mesh(region, sphere)
    part = frame.forward(sphere)
    checker = two_tone(atlas_resolution, cells=32, a=(0.35, 0.45, 0.75), b=(0.25, 0.35, 0.65))
    fs.stage_texture(part, instruction, TexturedMesh(
        TriMesh(part.vertices, part.faces, per_face_layout(part.n_faces, atlas_resolution)),
        TextureAtlas(checker)))
    cfg = workdir / "bump_insert.cfg"
    cfg.write_text(
        f"task = insert\nmesh = original.obj\ntexture = original_texture.npy\n"
        f"backend_root = {root}\ninstruction = {instruction}\noutput = out\n"
        f"atlas_resolution = {atlas_resolution}\ngrid_resolution = {grid_resolution}\n"
        f"reference_resolution = {reference_resolution}\n"
        f"fusion.iterations = {iterations}\nfusion.views = 8\nfusion.resolution = 128\n",
        encoding="utf-8")
    return cfg


def stage_identity(root, workdir, task: str, *, instruction="do nothing", grid_resolution=32,
                   atlas_resolution=128, reference_resolution=64):
    """Stage an edit that changes nothing.

    ``insert`` returns an empty region mesh; ``delete`` returns a removal
    solid lying entirely outside the object. Both variants stage the same
    blank region image, so give each task its own backend ``root``.
    Returns the config path.
    """
    from pathlib import Path

    from .mesh_core import box, icosphere, save_mesh
    from .pipeline import FilesystemBackend, per_face_layout, working_reference

    root, workdir = Path(root), Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    obj = icosphere(2, 0.5)
    obj = TriMesh(obj.vertices, obj.faces, per_face_layout(obj.n_faces, atlas_resolution))
    save_mesh(obj, workdir / "original.obj")
    rng = np.random.default_rng(5)
    np.save(workdir / "original_texture.npy", rng.random((atlas_resolution, atlas_resolution, 3)))
    fs = FilesystemBackend(root)
    ref_img = working_reference(obj, reference_resolution)
    edited = ref_img.copy()
    region = np.zeros_like(ref_img)
    fs.stage_image_edit(ref_img, instruction, edited, region)
    fs.stage_mesh(edited, obj.without_attributes())
    if task == "insert":
        fs.stage_mesh(region, TriMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64)))
    else:
        fs.stage_mesh(region, box((0.9, 0.9, 0.9), (1.0, 1.0, 1.0)))
    cfg = workdir / f"identity_{task}.cfg"
    cfg.write_text(
        f"task = {task}\nmesh = original.obj\ntexture = original_texture.npy\n"
        f"backend_root = {root}\ninstruction = {instruction}\noutput = out_{task}\n"
        f"atlas_resolution = {atlas_resolution}\ngrid_resolution = {grid_resolution}\n"
        f"reference_resolution = {reference_resolution}\nfusion.iterations = 20\n",
        encoding="utf-8")
    return cfg
