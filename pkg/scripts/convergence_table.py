"""Print the convergence-study table (errors versus resolution)."""
import argparse

from dbar_bie.experiments import run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--grid", default="4,6,8")
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    grids = [int(x) for x in a.grid.split(",")]
    rep = run("convergence-study", {"grids": grids, "seed": a.seed, "write_csv": False})
    for key, e in rep.data.items():
        print(f"\n{key}  (fitted slope {e['slope']:.2f}; expected {e['expected']})")
        for x, err in zip(e["resolutions"], e["errors"]):
            print(f"  {x:>8.4g}  {err:.3e}")
    print("\n" + "\n".join(rep.summary_lines()))


if __name__ == "__main__":
    main()
