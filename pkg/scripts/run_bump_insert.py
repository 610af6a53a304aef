"""Stage and run the slab + bump insert workflow end to end."""
import argparse
from pathlib import Path

from craftmesh.fixtures import stage_bump_insert
from craftmesh.pipeline import load_config, run_workflow


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", type=Path, default=Path("bump_insert"))
    ap.add_argument("--iterations", type=int, default=100)
    args = ap.parse_args()

    cfg = stage_bump_insert(args.workdir / "backend", args.workdir, iterations=args.iterations)
    res = run_workflow(load_config(cfg))
    for key in sorted(res.report):
        if key.startswith(("metric.", "status", "identity")):
            print(f"{key} = {res.report[key]}")
    print(f"output = {res.output}")


if __name__ == "__main__":
    main()
