"""Command line entry point: ``craftmesh <subcommand>``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np


def _read_image01(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64)
    from PIL import Image

    with Image.open(path) as im:
        a = np.asarray(im.convert("RGB") if im.mode not in ("L", "1") else im.convert("L"), dtype=np.float64)
    return a / 255.0


def _write_image01(path, img) -> None:
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, img)
        return
    from PIL import Image

    a = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(a).save(path)


def cmd_run(args) -> int:
    import os

    from .pipeline import BACKEND_ROOT_ENV, load_config, run_workflow

    if args.backend_root:
        os.environ[BACKEND_ROOT_ENV] = str(args.backend_root)
    cfg = load_config(args.config)
    res = run_workflow(cfg)
    print(f"status = {res.report['status']}")
    print(f"output = {res.output}")
    return 0


def cmd_boolean(args) -> int:
    from .mesh_core import load_mesh, save_mesh
    from .pipeline import boolean_merge
    from .sdf_boolean import BooleanOp, extract_regions

    a, b = load_mesh(args.a), load_mesh(args.b)
    merged, seam, identity, spacing = boolean_merge(a, b, BooleanOp(args.op), args.resolution, args.tau)
    save_mesh(merged, args.out)
    print(f"faces = {merged.n_faces}\nseam_points = {len(seam)}\nidentity = {identity}")
    if args.regions_out:
        if args.reference is None:
            raise SystemExit("--regions-out needs --reference")
        reg = extract_regions(merged, load_mesh(args.reference), seam, args.eps0, args.eps1)
        reg.save(args.regions_out)
    return 0


def _fusion_config(args):
    from .geo_fusion import FusionConfig

    kw = {}
    for f in dataclasses.fields(FusionConfig):
        v = getattr(args, f"fusion_{f.name}", None)
        if v is not None:
            kw[f.name] = v
    return FusionConfig(**kw)


def cmd_fuse(args) -> int:
    from .geo_fusion import fuse_geometry, max_seam_dihedral
    from .mesh_core import load_mesh, save_mesh
    from .sdf_boolean import RegionSelection

    merged, ref = load_mesh(args.merged), load_mesh(args.reference)
    regions = RegionSelection.load(args.regions)
    res = fuse_geometry(merged, ref, regions, _fusion_config(args), seed=args.seed)
    save_mesh(res.mesh, args.out)
    if args.trace:
        Path(args.trace).write_text(",".join(repr(float(x)) for x in res.loss_trace) + "\n", encoding="utf-8")
    if args.regions_out:
        res.regions.save(args.regions_out)
    print(f"dihedral_before = {max_seam_dihedral(merged, regions.t_opt)!r}")
    print(f"dihedral_after = {max_seam_dihedral(res.mesh, res.regions.t_opt)!r}")
    return 0


def cmd_harmonize(args) -> int:
    from .mesh_core import load_mesh, save_mesh
    from .pipeline import _load_atlas
    from .sdf_boolean import RegionSelection
    from .tex_harmon import harmonize_texture

    mesh = load_mesh(args.mesh)
    atlas = _load_atlas(args.atlas)
    regions = RegionSelection.load(args.regions)
    out, tm, rep = harmonize_texture(mesh, atlas, regions)
    out.save(args.out)
    if args.dump_texel_mesh and tm is not None:
        save_mesh(tm.as_mesh(), args.dump_texel_mesh)
    print(f"new_texels = {rep.new_texels}\nboundary_vertices = {rep.boundary_vertices}")
    return 0


def cmd_pie(args) -> int:
    from .poisson2d import poisson_blend

    t = _read_image01(args.target)
    s = _read_image01(args.source)
    m = _read_image01(args.mask)
    if m.ndim == 3:
        m = m.max(-1)
    out = poisson_blend(t, s, m > 0.5, mixed=args.mixed, erode=args.erode)
    _write_image01(args.out, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    from .geo_fusion import FusionConfig

    p = argparse.ArgumentParser(prog="craftmesh", description="Mesh editing with Poisson fusion and harmonization")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a full editing workflow from a config file")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--backend-root", type=Path, help="overrides the config's backend_root")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("boolean", help="SDF Boolean of two closed meshes")
    b.add_argument("a", type=Path)
    b.add_argument("b", type=Path)
    b.add_argument("--op", choices=["union", "difference"], default="union")
    b.add_argument("--resolution", type=int, default=128)
    b.add_argument("--tau", type=float)
    b.add_argument("--out", required=True, type=Path)
    b.add_argument("--reference", type=Path, help="edited reference mesh for region extraction")
    b.add_argument("--eps0", type=float, default=0.08)
    b.add_argument("--eps1", type=float, default=0.05)
    b.add_argument("--regions-out", type=Path)
    b.set_defaults(func=cmd_boolean)

    f = sub.add_parser("fuse-geom", help="geometric fusion of a merged mesh toward a reference")
    f.add_argument("--merged", required=True, type=Path)
    f.add_argument("--reference", required=True, type=Path)
    f.add_argument("--regions", required=True, type=Path)
    f.add_argument("--out", required=True, type=Path)
    f.add_argument("--trace", type=Path, help="comma-separated loss trace output")
    f.add_argument("--regions-out", type=Path)
    f.add_argument("--seed", type=int, default=0)
    for fld in dataclasses.fields(FusionConfig):
        typ = {"int": int, "float": float}.get(str(fld.type).replace("Optional[", "").rstrip("]"), float)
        f.add_argument(f"--{fld.name.replace('_', '-')}", dest=f"fusion_{fld.name}", type=typ)
    f.set_defaults(func=cmd_fuse)

    h = sub.add_parser("harmonize-tex", help="Poisson texture harmonization of the new region")
    h.add_argument("--mesh", required=True, type=Path)
    h.add_argument("--atlas", required=True, type=Path)
    h.add_argument("--regions", required=True, type=Path)
    h.add_argument("--out", required=True, type=Path)
    h.add_argument("--dump-texel-mesh", type=Path)
    h.set_defaults(func=cmd_harmonize)

    q = sub.add_parser("pie", help="Poisson image blending")
    q.add_argument("--target", required=True)
    q.add_argument("--source", required=True)
    q.add_argument("--mask", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--mixed", action="store_true")
    q.add_argument("--erode", action="store_true", help="trim a mask touching the image border")
    q.set_defaults(func=cmd_pie)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # report cleanly on the command line
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
