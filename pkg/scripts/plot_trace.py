"""Plot a run trace: COI frequency, delivered power, cost and mismatch per ARU.

Usage: python3 scripts/plot_trace.py out/trace.csv [--aru aru1] [--save fig.png]
"""

import argparse
import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_trace(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) if v else math.nan for v in row] for row in reader]
    data = np.array(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(header)}


def aru_names(cols):
    return sorted({c.split(".", 1)[0] for c in cols if c.endswith(".mismatch")})


def plot(cols, aru, save=None):
    t = cols["t"]
    xs = sorted((c for c in cols if c.startswith(f"{aru}.x_")),
                key=lambda c: int(c.rsplit("_", 1)[1]))
    fig, ax = plt.subplots(4, 1, figsize=(8, 10), sharex=True)
    ax[0].plot(t, cols["deviation"], lw=0.8)
    ax[0].set_ylabel("COI deviation [Hz]")
    for c in xs:
        ax[1].plot(t, cols[c], lw=0.8, label=c.split(".", 1)[1])
    ax[1].set_ylabel("delivered [MW]")
    if len(xs) <= 10:
        ax[1].legend(fontsize="small", ncol=2)
    star = cols[f"{aru}.cost_star"]
    ok = ~np.isnan(star)
    ax[2].plot(t, cols[f"{aru}.cost"], lw=0.8, label="controller")
    ax[2].plot(t[ok], star[ok], "--", lw=0.8, label="optimum")
    ax[2].set_ylabel("cost")
    ax[2].legend(fontsize="small")
    ax[3].plot(t, cols[f"{aru}.mismatch"], lw=0.8)
    ax[3].set_ylabel("mismatch [MW]")
    ax[3].set_xlabel("t [s]")
    fig.suptitle(aru)
    fig.tight_layout()
    if save:
        fig.savefig(save, dpi=150)
    return fig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("trace", type=Path)
    ap.add_argument("--aru", help="ARU to plot (default: all)")
    ap.add_argument("--save", type=Path, help="output image; one file per ARU when several")
    args = ap.parse_args(argv)
    cols = read_trace(args.trace)
    names = [args.aru] if args.aru else aru_names(cols)
    for name in names:
        save = args.save
        if save is not None and len(names) > 1:
            save = save.with_name(f"{save.stem}_{name}{save.suffix}")
        plot(cols, name, save or args.trace.with_name(f"{name}.png"))


if __name__ == "__main__":
    main()
