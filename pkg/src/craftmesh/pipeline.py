"""Editing workflows (insert / delete / replace / drag) over pluggable generative backends.

The generative models are reached only through three narrow interfaces:
``ImageEdit``, ``MeshGen`` and ``TextureGen``. The shipped implementation
reads pre-staged assets from a directory keyed by content hashes, so runs
are reproducible and never touch the network.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import logging
import math
import os
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

import numpy as np
from scipy.spatial import cKDTree

from .geo_fusion import FusionConfig, fuse_geometry, max_seam_dihedral
from .mesh_core import DistanceIndex, MeshValidationError, TriMesh, load_mesh, save_mesh
from .raster import Camera, encode_normal_image, render
from .sdf_boolean import (BooleanOp, RegionSelection, classify_new_vs_preserved, combine,
                          extract_regions, extract_seam, marching_cubes, padded_bounds, sample_sdf)
from .tex_harmon import TextureAtlas, build_correspondence, harmonize_texture, uv_to_pixel

log = logging.getLogger(__name__)

TASKS = ("insert", "delete", "replace", "drag")
BACKEND_ROOT_ENV = "CRAFTMESH_BACKEND_ROOT"
REQUIRED_KEYS = ("task", "mesh")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class BackendMiss(KeyError):
    def __init__(self, kind, key):
        self.kind = kind
        self.key = key
        super().__init__(f"no staged {kind} asset: manifest has no entry '{key}'")

    def __str__(self):
        return self.args[0]


class BackendAssetError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    task: str
    mesh: Path
    texture: Optional[Path] = None
    backend_root: Optional[Path] = None
    instruction: str = ""
    drag_annotation: Optional[Path] = None
    output: Path = Path("craftmesh_out")
    eps0: float = 0.08
    eps1: float = 0.05
    seed: int = 0
    atlas_resolution: int = 1024
    grid_resolution: int = 128
    reference_resolution: int = 512
    seam_tau: Optional[float] = None    # default: 2 grid cells
    new_delta: Optional[float] = None   # default: 2 grid cells
    align: bool = False
    fuse: bool = True
    harmonize: bool = True
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def problems(self, check_paths: bool = True):
        out = []
        if self.task not in TASKS:
            out.append(f"task must be one of {', '.join(TASKS)}; got '{self.task}'")
        if not (0 < self.eps1 < self.eps0):
            out.append(f"need 0 < eps1 < eps0, got eps0={self.eps0}, eps1={self.eps1}")
        if self.atlas_resolution < 16:
            out.append("atlas_resolution must be >= 16")
        if self.grid_resolution < 8:
            out.append("grid_resolution must be >= 8")
        if self.task == "drag" and self.drag_annotation is None:
            out.append("task 'drag' requires drag_annotation")
        if self.task in ("insert", "delete", "replace") and not self.instruction:
            out.append(f"task '{self.task}' requires instruction")
        if check_paths:
            for name in ("mesh", "texture", "drag_annotation"):
                p = getattr(self, name)
                if p is not None and not Path(p).is_file():
                    out.append(f"{name}: file not found: {p}")
            if self.backend_root is None:
                out.append(f"backend_root missing (set it or {BACKEND_ROOT_ENV})")
            elif not Path(self.backend_root).is_dir():
                out.append(f"backend_root: directory not found: {self.backend_root}")
        return out

    def validate(self, check_paths: bool = True):
        p = self.problems(check_paths)
        if p:
            raise ConfigError(p)
        return self

    def echo(self) -> dict:
        """Flat key/value view used in run reports."""
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "fusion":
                for k, fv in dataclasses.asdict(v).items():
                    out[f"fusion.{k}"] = fv
            else:
                out[f.name] = v
        return out


_PATH_KEYS = {"mesh", "texture", "backend_root", "drag_annotation", "output"}


def _convert(raw: str, annotation, name):
    t = str(annotation)
    if "bool" in t:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got '{raw}'")
    if "int" in t:
        return int(raw)
    if "float" in t:
        if "Optional" in t and raw.strip().lower() in ("", "none"):
            return None
        return float(raw)
    return raw.strip()


def parse_config_text(text: str, base_dir=".") -> PipelineConfig:
    """Parse ``key = value`` lines; ``fusion.<field>`` keys configure fusion.

    Relative paths resolve against ``base_dir``. Unknown keys warn.
    """
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[craftmesh]\n" + text)
    items = dict(cp["craftmesh"])
    base = Path(base_dir)
    problems = [f"missing required key '{k}'" for k in REQUIRED_KEYS if k not in items]

    top = {f.name: f for f in dataclasses.fields(PipelineConfig) if f.name != "fusion"}
    fus = {f.name: f for f in dataclasses.fields(FusionConfig)}
    kw, fkw = {}, {}
    for key, raw in items.items():
        try:
            if key.startswith("fusion."):
                name = key[len("fusion."):]
                if name not in fus:
                    warnings.warn(f"unknown config key '{key}' ignored")
                    continue
                fkw[name] = _convert(raw, fus[name].type, key)
            elif key in top:
                if key in _PATH_KEYS:
                    p = Path(raw.strip())
                    kw[key] = p if p.is_absolute() else base / p
                else:
                    kw[key] = _convert(raw, top[key].type, key)
            else:
                warnings.warn(f"unknown config key '{key}' ignored")
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    env_root = os.environ.get(BACKEND_ROOT_ENV)
    if env_root:
        kw["backend_root"] = Path(env_root)
    try:
        fusion = FusionConfig(**fkw)
    except ValueError as exc:
        problems.append(f"fusion: {exc}")
        fusion = FusionConfig()
    if problems and any(k not in kw for k in REQUIRED_KEYS):
        raise ConfigError(problems)
    cfg = PipelineConfig(**kw, fusion=fusion)
    cfg.task = str(cfg.task).lower()
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), path.parent)


# ---------------------------------------------------------------------------
# backends


@dataclass(frozen=True, eq=False)
class EditResult:
    edited: np.ndarray
    region: np.ndarray
    removed_region: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class TexturedMesh:
    mesh: TriMesh
    atlas: TextureAtlas


class ImageEdit(Protocol):
    def edit(self, image: np.ndarray, instruction: str) -> EditResult: ...


class MeshGen(Protocol):
    def generate(self, image: np.ndarray) -> TriMesh: ...


class TextureGen(Protocol):
    def texture(self, mesh: TriMesh, prompt: str) -> TexturedMesh: ...


@dataclass
class Backends:
    image_edit: ImageEdit
    mesh_gen: MeshGen
    texture_gen: TextureGen


def content_digest(obj) -> str:
    """SHA-256 of an image array, a mesh (geometry only) or raw bytes."""
    h = hashlib.sha256()
    if isinstance(obj, TriMesh):
        h.update(b"mesh")
        for a in (obj.vertices, obj.faces):
            a = np.ascontiguousarray(a)
            h.update(f"{a.dtype.str}{a.shape}".encode())
            h.update(a.tobytes())
    elif isinstance(obj, np.ndarray):
        a = np.ascontiguousarray(obj)
        h.update(f"{a.dtype.str}{a.shape}".encode())
        h.update(a.tobytes())
    elif isinstance(obj, (bytes, bytearray)):
        h.update(obj)
    else:
        raise TypeError(f"cannot digest {type(obj).__name__}")
    return h.hexdigest()


def request_key(kind: str, payload, instruction: str = "") -> str:
    """Manifest key: ``sha256("<kind>\\n<content digest>\\n<instruction>")``."""
    return hashlib.sha256(f"{kind}\n{content_digest(payload)}\n{instruction}".encode()).hexdigest()


def _read_image(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def _write_image(path, img) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path)


class FilesystemBackend:
    """Pre-staged assets under ``root`` indexed by ``manifest.json``.

    Every call is appended to ``audit`` as ``(kind, key, outcome, transport)``.
    """

    MANIFEST = "manifest.json"

    def __init__(self, root):
        self.root = Path(root)
        self.audit = []
        path = self.root / self.MANIFEST
        self.manifest = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {"entries": {}}

    # lookups -------------------------------------------------------------
    def _entry(self, kind, key):
        e = self.manifest.get("entries", {}).get(key)
        if e is None or e.get("kind") != kind:
            self.audit.append((kind, key, "miss", "filesystem"))
            raise BackendMiss(kind, key)
        self.audit.append((kind, key, "hit", "filesystem"))
        return e

    def _file(self, name):
        return self.root / name

    def edit(self, image, instruction) -> EditResult:
        key = request_key("image_edit", image, instruction)
        e = self._entry("image_edit", key)
        files = e["files"]
        try:
            removed = _read_image(self._file(files["removed_region"])) if "removed_region" in files else None
            return EditResult(_read_image(self._file(files["edited"])), _read_image(self._file(files["region"])),
                              removed)
        except (OSError, KeyError) as exc:
            raise BackendAssetError(f"image_edit entry {key}: {exc}") from exc

    def generate(self, image) -> TriMesh:
        key = request_key("mesh_gen", image)
        e = self._entry("mesh_gen", key)
        try:
            return load_mesh(self._file(e["files"]["mesh"]))
        except (MeshValidationError, ValueError, OSError) as exc:
            raise BackendAssetError(f"mesh_gen entry {key}: staged mesh invalid: {exc}") from exc

    def texture(self, mesh, prompt) -> TexturedMesh:
        key = request_key("texture_gen", mesh, prompt)
        e = self._entry("texture_gen", key)
        try:
            m = load_mesh(self._file(e["files"]["mesh"]))
            atlas = _load_atlas(self._file(e["files"]["texture"]))
        except (MeshValidationError, ValueError, OSError) as exc:
            raise BackendAssetError(f"texture_gen entry {key}: staged asset invalid: {exc}") from exc
        if m.uvs is None:
            raise BackendAssetError(f"texture_gen entry {key}: staged mesh has no UVs")
        return TexturedMesh(m, atlas)

    # staging -------------------------------------------------------------
    def _put(self, key, kind, files):
        self.manifest.setdefault("entries", {})[key] = {"kind": kind, "files": files}
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / self.MANIFEST).write_text(json.dumps(self.manifest, indent=1, sort_keys=True),
                                               encoding="utf-8")

    def stage_image_edit(self, image, instruction, edited, region, removed_region=None) -> str:
        key = request_key("image_edit", image, instruction)
        files = {}
        (self.root / "assets").mkdir(parents=True, exist_ok=True)
        for name, img in (("edited", edited), ("region", region), ("removed_region", removed_region)):
            if img is not None:
                rel = f"assets/{key[:16]}_{name}.png"
                _write_image(self.root / rel, img)
                files[name] = rel
        self._put(key, "image_edit", files)
        return key

    def stage_mesh(self, image, mesh: TriMesh) -> str:
        key = request_key("mesh_gen", image)
        rel = f"assets/{key[:16]}_mesh.obj"
        (self.root / "assets").mkdir(parents=True, exist_ok=True)
        save_mesh(mesh, self.root / rel)
        self._put(key, "mesh_gen", {"mesh": rel})
        return key

    def stage_texture(self, mesh: TriMesh, prompt, textured: TexturedMesh) -> str:
        key = request_key("texture_gen", mesh, prompt)
        (self.root / "assets").mkdir(parents=True, exist_ok=True)
        mrel, trel = f"assets/{key[:16]}_textured.obj", f"assets/{key[:16]}_texture.npy"
        save_mesh(textured.mesh, self.root / mrel)
        np.save(self.root / trel, textured.atlas.image)
        self._put(key, "texture_gen", {"mesh": mrel, "texture": trel})
        return key


def filesystem_backend(root) -> Backends:
    fs = FilesystemBackend(root)
    return Backends(fs, fs, fs)


def _load_atlas(path) -> TextureAtlas:
    path = Path(path)
    if path.suffix == ".npy":
        return TextureAtlas(np.load(path))
    return TextureAtlas.load(path)


# ---------------------------------------------------------------------------
# geometry helpers


@dataclass(frozen=True)
class Frame:
    """Affine map to the working frame: ``(v - center) / scale``."""

    center: tuple
    scale: float

    @classmethod
    def unit_cube(cls, mesh: TriMesh) -> "Frame":
        lo, hi = mesh.bounds()
        ext = float((hi - lo).max())
        return cls(tuple((0.5 * (lo + hi)).tolist()), ext if ext > 0 else 1.0)

    def forward(self, mesh: TriMesh) -> TriMesh:
        return mesh.with_vertices((mesh.vertices - np.asarray(self.center)) / self.scale)

    def inverse(self, mesh: TriMesh) -> TriMesh:
        return mesh.with_vertices(mesh.vertices * self.scale + np.asarray(self.center))


def rigid_align(source: TriMesh, target: TriMesh, iterations: int = 30):
    """Point-to-point ICP from ``source`` vertices to ``target``; returns (R, t)."""
    tree = cKDTree(target.vertices)
    R, t = np.eye(3), np.zeros(3)
    P = source.vertices
    for _ in range(iterations):
        X = P @ R.T + t
        _, j = tree.query(X)
        Y = target.vertices[j]
        mx, my = X.mean(0), Y.mean(0)
        U, _, Vt = np.linalg.svd((X - mx).T @ (Y - my))
        D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
        dR = Vt.T @ D @ U.T
        R, t = dR @ R, dR @ (t - mx) + my
    return R, t


def reference_camera(resolution: int) -> Camera:
    """Fixed front-left elevated camera on the normalized frame."""
    return Camera((1.2, -2.0, 1.2), (0.0, 0.0, 0.0), (0.0, 0.0, 1.0), math.radians(40.0),
                  resolution, resolution)


def render_reference(mesh: TriMesh, resolution: int) -> np.ndarray:
    """8-bit normal-map render used as the reference image for image editing."""
    img = encode_normal_image(render(mesh, reference_camera(resolution)))
    return np.round(img * 255).astype(np.uint8)


def working_reference(original: TriMesh, resolution: int) -> np.ndarray:
    """Reference image exactly as a run renders it for the ImageEdit request."""
    return render_reference(Frame.unit_cube(original).forward(original), resolution)


def per_face_layout(n_faces: int, resolution: int) -> np.ndarray:
    """UVs placing every face in its own atlas cell with a gutter; (F, 3, 2)."""
    k = max(1, math.ceil(math.sqrt(n_faces)))
    cell = resolution // k
    if cell < 4:
        raise ValueError(f"atlas resolution {resolution} too small for {n_faces} faces")
    i = np.arange(n_faces)
    x0 = (i % k) * cell
    y0 = (i // k) * cell
    lo, hi = 0.25, cell - 1.25
    px = np.stack([np.stack([x0 + lo, y0 + lo], 1), np.stack([x0 + hi, y0 + lo], 1),
                   np.stack([x0 + lo, y0 + hi], 1)], 1)
    u = (px[..., 0] + 0.5) / resolution
    v = 1.0 - (px[..., 1] + 0.5) / resolution
    return np.stack([u, v], -1)


def sample_texture(src: TexturedMesh, points) -> np.ndarray:
    """Nearest-texel color at the closest surface point of ``src`` for each point."""
    _, face, _, bary = DistanceIndex(src.mesh).query(points)
    uv = np.einsum("ij,ijk->ik", bary, src.mesh.uvs[face])
    a = src.atlas
    px = uv_to_pixel(uv, a.width, a.height)
    c = np.clip(np.rint(px[:, 0]).astype(np.int64), 0, a.width - 1)
    r = np.clip(np.rint(px[:, 1]).astype(np.int64), 0, a.height - 1)
    return a.image[r, c]


def seam_color_difference(mesh: TriMesh, atlas: TextureAtlas, regions: RegionSelection, corr=None) -> float:
    """Mean color gap across edges between new and preserved faces.

    Each side is represented by its texel nearest to the shared edge midpoint.
    """
    if corr is None:
        corr = build_correspondence(mesh, atlas, regions)
    topo = mesh.topology
    ef = topo.edge_faces
    is_new = np.zeros(mesh.n_faces, bool)
    is_new[regions.new_faces] = True
    is_pr = np.zeros(mesh.n_faces, bool)
    is_pr[regions.preserved_faces] = True
    inner = ef[:, 1] >= 0
    a, b = ef[:, 0], np.maximum(ef[:, 1], 0)
    sel = inner & ((is_new[a] & is_pr[b]) | (is_pr[a] & is_new[b]))
    if not sel.any() or len(corr) == 0:
        return 0.0
    order = np.argsort(corr.face, kind="stable")
    starts = np.searchsorted(corr.face[order], np.arange(mesh.n_faces + 1))
    mids = mesh.vertices[topo.edges[sel]].mean(1)
    gaps = []
    for m, fa, fb in zip(mids, a[sel], b[sel]):
        cols = []
        for f in (fa, fb):
            idx = order[starts[f]:starts[f + 1]]
            if len(idx) == 0:
                break
            j = idx[np.argmin(np.linalg.norm(corr.points[idx] - m, axis=1))]
            cols.append(atlas.image[corr.rows[j], corr.cols[j], :3])
        if len(cols) == 2:
            gaps.append(np.abs(cols[0] - cols[1]).mean())
    return float(np.mean(gaps)) if gaps else 0.0


# ---------------------------------------------------------------------------
# merge stage


@dataclass
class MergeOutcome:
    textured: TexturedMesh
    regions: Optional[RegionSelection]
    loss_trace: list
    metrics: dict
    identity: bool
    intermediates: dict = field(default_factory=dict)


def boolean_merge(base: TriMesh, part: TriMesh, op: BooleanOp, resolution: int, tau=None):
    """SDF Boolean; returns ``(merged, seam points, identity flag, grid spacing)``.

    ``identity`` is true when the edit leaves the grid's inside/outside
    pattern unchanged, in which case ``merged`` is ``base`` itself.
    """
    if part.n_faces == 0:
        return base, np.zeros((0, 3)), True, None
    bounds = padded_bounds([base, part], resolution)
    spacing = float(np.max(bounds[1] - bounds[0])) / resolution
    tau = 2.0 * spacing if tau is None else tau
    # exact values are only needed near the surfaces: marching cubes reads
    # sign-change cells and seam extraction interpolates within tau of both
    band = max(6.0 * spacing, tau + 4.0 * spacing)
    ga = sample_sdf(base, DistanceIndex(base), bounds, resolution, band=band)
    gb = sample_sdf(part, DistanceIndex(part), bounds, resolution, band=band)
    merged = combine(ga, gb, op)
    if np.array_equal(merged.values <= 0, ga.values <= 0):
        return base, np.zeros((0, 3)), True, ga.spacing
    mesh, touches = marching_cubes(merged)
    if touches:
        raise ValueError("merged surface touches the grid boundary")
    return mesh, extract_seam(ga, gb, mesh, tau), False, ga.spacing


def merge_edit(base: TexturedMesh, part: TriMesh, reference: TriMesh, op, new_source,
               cfg: PipelineConfig, timer=None, on_intermediate=None) -> MergeOutcome:
    """Boolean merge, geometric fusion and texture harmonization of one edit.

    ``new_source`` is a :class:`TexturedMesh` (or a callable returning one)
    providing colors for the new region; it is only fetched when needed.
    ``on_intermediate(name, mesh)`` is called as soon as each stage mesh exists.
    """
    op = BooleanOp(op)
    timer = timer or _null_timer
    keep = on_intermediate or (lambda name, mesh: None)
    with timer(f"{op.value}.boolean"):
        merged, seam, identity, spacing = boolean_merge(base.mesh, part, op, cfg.grid_resolution, cfg.seam_tau)
    if identity:
        return MergeOutcome(base, None, [], {}, True)
    inter = {"boolean": merged}
    keep("boolean", merged)
    metrics = {}
    trace = []
    with timer(f"{op.value}.regions"):
        regions = extract_regions(merged, reference, seam, cfg.eps0, cfg.eps1)
    fused = merged
    if cfg.fuse and len(regions.t_opt) and cfg.fusion.iterations > 0:
        with timer(f"{op.value}.fusion"):
            metrics["seam_dihedral_before"] = max_seam_dihedral(merged, regions.t_opt)
            res = fuse_geometry(merged, reference, regions, cfg.fusion, seed=cfg.seed)
            fused, trace = res.mesh, res.loss_trace
            regions = res.regions
            metrics["seam_dihedral_after"] = max_seam_dihedral(fused, regions.t_opt)
    inter["fused"] = fused
    keep("fused", fused)
    with timer(f"{op.value}.texture"):
        delta = 2.0 * spacing if cfg.new_delta is None else cfg.new_delta
        new_f, pres_f = classify_new_vs_preserved(fused, base.mesh, delta)
        regions = regions.with_faces(new_f, pres_f)
        uvs = per_face_layout(fused.n_faces, cfg.atlas_resolution)
        textured_mesh = TriMesh(fused.vertices, fused.faces, uvs)
        blank = TextureAtlas(np.full((cfg.atlas_resolution, cfg.atlas_resolution, 3), 0.5))
        corr = build_correspondence(textured_mesh, blank, regions)
        img = blank.image.copy()
        if len(corr):
            colors = np.empty((len(corr), 3))
            pr = ~corr.is_new
            if pr.any():
                colors[pr] = sample_texture(base, corr.points[pr])[:, :3]
            if (~pr).any():
                src = new_source() if callable(new_source) else new_source
                src = base if src is None else src
                colors[~pr] = sample_texture(src, corr.points[~pr])[:, :3]
            img[corr.rows, corr.cols] = colors
        atlas = TextureAtlas(img, corr.valid_mask())
        metrics["seam_color_before"] = seam_color_difference(textured_mesh, atlas, regions, corr)
        if cfg.harmonize and len(new_f):
            atlas, _, rep = harmonize_texture(textured_mesh, atlas, regions)
            metrics["harmonized_texels"] = rep.new_texels
        metrics["seam_color_after"] = seam_color_difference(textured_mesh, atlas, regions, corr)
    return MergeOutcome(TexturedMesh(textured_mesh, atlas), regions, trace, metrics, False, inter)


@contextmanager
def _null_timer(name):
    yield


# ---------------------------------------------------------------------------
# workflow


@dataclass
class RunResult:
    output: Path
    report: dict
    mesh: TriMesh
    atlas: TextureAtlas
    loss_trace: list


def default_atlas(mesh: TriMesh, resolution: int) -> TexturedMesh:
    uvs = mesh.uvs if mesh.uvs is not None else per_face_layout(mesh.n_faces, resolution)
    return TexturedMesh(TriMesh(mesh.vertices, mesh.faces, uvs),
                        TextureAtlas(np.full((resolution, resolution, 3), 0.5)))


def _file_sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def format_report(report: dict) -> str:
    lines = []
    for k in sorted(report):
        v = report[k]
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def run_workflow(config: PipelineConfig, backends: Optional[Backends] = None) -> RunResult:
    """Run one editing task end to end and write the output bundle.

    On failure the partial bundle and a report naming the failed stage are
    kept in the output directory and :class:`PipelineError` is raised.
    """
    config.validate()
    if backends is None:
        backends = filesystem_backend(config.backend_root)
    out = Path(config.output)
    inter_dir = out / "intermediates"
    inter_dir.mkdir(parents=True, exist_ok=True)
    report = {"status": "running", "task": config.task}
    for k, v in config.echo().items():
        report[f"config.{k}"] = v
    state = {"stage": None}

    @contextmanager
    def stage(name):
        state["stage"] = name
        t0 = time.perf_counter()
        yield
        report[f"time.{name}"] = round(time.perf_counter() - t0, 4)

    def save_intermediate(name, mesh):
        p = inter_dir / f"{name}.obj"
        save_mesh(mesh, p)
        report[f"asset.{name}.obj"] = _file_sha(p)

    try:
        with stage("ingest"):
            original = load_mesh(config.mesh)
            report["asset.input_mesh"] = _file_sha(config.mesh)
            frame = Frame.unit_cube(original)
            norm = frame.forward(original)
            if config.texture is not None:
                report["asset.input_texture"] = _file_sha(config.texture)
                if norm.uvs is None:
                    raise ValueError("texture given but the input mesh has no UVs")
                base = TexturedMesh(norm, _load_atlas(config.texture))
            else:
                base = default_atlas(norm, config.atlas_resolution)
            save_intermediate("original", base.mesh)

        with stage("image_edit"):
            ref_img = render_reference(base.mesh, config.reference_resolution)
            _write_image(inter_dir / "reference.png", ref_img)
            if config.task == "drag":
                instruction = "drag:" + _file_sha(config.drag_annotation)
            else:
                instruction = config.instruction
            edit = backends.image_edit.edit(ref_img, instruction)
            for name in ("edited", "region", "removed_region"):
                img = getattr(edit, name)
                if img is not None:
                    _write_image(inter_dir / f"{name}.png", img)
            if config.task in ("replace", "drag") and edit.removed_region is None:
                raise BackendAssetError(f"task '{config.task}' needs a removed_region image from ImageEdit")

        with stage("mesh_gen"):
            reference = frame.forward(backends.mesh_gen.generate(edit.edited))
            if config.task == "delete":
                part = frame.forward(backends.mesh_gen.generate(edit.region))
                removed = None
            else:
                part = frame.forward(backends.mesh_gen.generate(edit.region))
                removed = (frame.forward(backends.mesh_gen.generate(edit.removed_region))
                           if edit.removed_region is not None and config.task in ("replace", "drag") else None)
            if config.align and reference.n_vertices:
                R, t = rigid_align(reference, base.mesh)
                move = lambda m: m.with_vertices(m.vertices @ R.T + t)
                reference, part = move(reference), move(part)
                removed = move(removed) if removed is not None else None
            save_intermediate("reference_mesh", reference)
            save_intermediate("region_mesh", part)
            if removed is not None:
                save_intermediate("removed_mesh", removed)

        prompt = instruction

        def texture_of(mesh):
            def fetch():
                with stage("texture_gen"):
                    return backends.texture_gen.texture(mesh, prompt)
            return fetch

        def timer(name):
            return stage(name)

        trace = []
        metrics = {}
        identity = True
        current = base
        steps = []
        if config.task == "insert":
            steps = [(part, BooleanOp.UNION, texture_of(part))]
        elif config.task == "delete":
            # the exposed cut surface takes its texture from the edited reference
            steps = [(part, BooleanOp.DIFFERENCE, texture_of(reference))]
        else:
            steps = [(removed, BooleanOp.DIFFERENCE, texture_of(reference)),
                     (part, BooleanOp.UNION, texture_of(part))]
        regions = None
        for i, (mesh_part, op, src) in enumerate(steps):
            res = merge_edit(current, mesh_part, reference, op, src, config, timer,
                             lambda name, m, i=i: save_intermediate(f"step{i}_{name}", m))
            if not res.identity:
                identity = False
                current = res.textured
                regions = res.regions
                trace += res.loss_trace
                for k, v in res.metrics.items():
                    metrics[f"metric.step{i}.{k}"] = v
            report[f"step{i}.{op.value}.identity"] = res.identity

        with stage("write"):
            if identity:
                final_mesh = original
                final_atlas = base.atlas
            else:
                final_mesh = frame.inverse(current.mesh)
                final_atlas = current.atlas
            save_mesh(final_mesh, out / "merged.obj", mtllib="merged.mtl")
            (out / "merged.mtl").write_text("newmtl material0\nmap_Kd texture.png\n", encoding="utf-8")
            final_atlas.save(out / "texture.png")
            np.save(out / "atlas.npy", final_atlas.image)
            (out / "loss_trace.txt").write_text(",".join(repr(float(x)) for x in trace) + "\n", encoding="utf-8")
            if regions is not None:
                regions.save(out / "regions.json")
            audit = getattr(backends.image_edit, "audit", None)
            if audit is not None:
                (out / "audit.log").write_text("".join(f"{k}\t{key}\t{o}\t{t}\n" for k, key, o, t in audit),
                                               encoding="utf-8")
            for name in ("merged.obj", "atlas.npy", "loss_trace.txt"):
                report[f"output.{name}"] = _file_sha(out / name)
        report.update(metrics)
        report["identity"] = identity
        report["status"] = "ok"
    except Exception as exc:
        report["status"] = "failed"
        report["failed_stage"] = state["stage"]
        report["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        (out / "report.txt").write_text(format_report(report), encoding="utf-8")
        raise PipelineError(state["stage"], exc) from exc
    (out / "report.txt").write_text(format_report(report), encoding="utf-8")
    return RunResult(out, report, final_mesh, final_atlas, trace)
