"""Constant-velocity experiment: an asymmetric datum forces b != 0, a
reflection-symmetric one does not."""
from dbar_bie.experiments import run


def main():
    rep = run("constant-velocity", {"write_csv": False})
    print(f"{'field':<16}{'t(1,0)':>24}{'b (free)':>24}{'pinned/free':>14}")
    for key, e in rep.data.items():
        name = key[key.index("[") + 1:-1]
        t = complex(e["t(1,0)"])
        b = e["free"].get("b")
        b = complex(*b) if isinstance(b, (list, tuple)) else b
        print(f"{name:<16}{t:>24.3e}{complex(b):>24.3e}{e['floored_ratio_at_1_0']:>14.3g}")
    print("\n" + "\n".join(rep.summary_lines()))


if __name__ == "__main__":
    main()
