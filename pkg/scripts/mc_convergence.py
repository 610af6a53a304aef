"""Marching-cubes radius error on the analytic unit sphere across grid resolutions."""
import argparse

import numpy as np

from craftmesh.sdf_boolean import SdfGrid, marching_cubes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[16, 32, 64, 128])
    args = ap.parse_args()
    prev = None
    print(f"{'res':>5} {'spacing':>10} {'max err':>10} {'err/h':>7} {'ratio':>7} {'euler':>5}")
    for res in args.resolutions:
        h = 3.0 / res
        ax = -1.5 + h * np.arange(res + 1)
        X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
        m, _ = marching_cubes(SdfGrid(np.full(3, -1.5), h, np.sqrt(X ** 2 + Y ** 2 + Z ** 2) - 1))
        err = np.abs(np.linalg.norm(m.vertices, axis=1) - 1).max()
        ratio = f"{err / prev:.3f}" if prev else "-"
        print(f"{res:>5} {h:>10.4f} {err:>10.3e} {err / h:>7.4f} {ratio:>7} {m.topology.euler_characteristic(m.n_faces):>5}")
        prev = err


if __name__ == "__main__":
    main()
