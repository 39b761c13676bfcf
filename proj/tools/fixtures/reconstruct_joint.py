#!/usr/bin/env python3
"""Rebuild integer joint counts from a published two-decimal percentage table.

Published contingency tables round every cell and every margin independently,
so their cells rarely add up to their own margins. This script finds counts
over a fixed pixel total whose cells AND margins all round (half-up, two
decimals) to the printed values, minimising the L1 distance to the printed
cells. Only the table itself is used as input.

    reconstruct_joint.py published.percent.csv out.counts.csv [--total 1000000]
"""
import argparse
import csv

import numpy as np
from scipy.optimize import linprog


def read_published(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header = rows[0][1:-1]
    body = [r for r in rows[1:] if r[0] != "total"]
    total = next(r for r in rows[1:] if r[0] == "total")
    names = [r[0] for r in body]
    cells = np.array([[float(v) for v in r[1:-1]] for r in body])
    row_margin = np.array([float(r[-1]) for r in body])
    col_margin = np.array([float(v) for v in total[1:-1]])
    return names, header, cells, row_margin, col_margin


def reconstruct(cells, row_margin, col_margin, total):
    unit = 100.0 / total
    # Largest admissible deviation from a printed value that still rounds
    # back to it, on the count grid.
    half = 0.005 - unit
    tc, rc = cells.shape
    n = tc * rc
    a_ub, b_ub = [], []
    for t in range(tc):
        row = np.zeros(2 * n)
        row[t * rc:(t + 1) * rc] = 1
        a_ub += [row, -row]
        b_ub += [row_margin[t] + half, -max(row_margin[t] - half, 0.0)]
    for r in range(rc):
        col = np.zeros(2 * n)
        col[r:n:rc] = 1
        a_ub += [col, -col]
        b_ub += [col_margin[r] + half, -max(col_margin[r] - half, 0.0)]
    eye = np.eye(n)
    for sign in (1.0, -1.0):
        a_ub += list(np.hstack([sign * eye, -eye]))
        b_ub += list(sign * cells.ravel())
    a_eq = np.zeros((1, 2 * n))
    a_eq[0, :n] = 1
    lo = np.maximum(cells - half, 0.0).ravel()
    hi = (cells + half).ravel()
    res = linprog(np.r_[np.zeros(n), np.ones(n)], A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                  A_eq=a_eq, b_eq=[100.0], bounds=list(zip(lo, hi)) + [(0, None)] * n,
                  method="highs")
    if res.status != 0:
        raise SystemExit(f"no consistent reconstruction: {res.message}")
    counts = np.rint(res.x[:n] / unit).astype(np.int64).reshape(tc, rc)
    drift = total - counts.sum()
    if drift:
        # Snap-to-grid residue goes to the largest cell.
        idx = np.unravel_index(np.argmax(counts), counts.shape)
        counts[idx] += drift
    return counts


def check(counts, cells, row_margin, col_margin):
    total = counts.sum()

    def half_up(x):
        return np.floor(x * 100.0 + 0.5 + 1e-9) / 100.0

    pct = counts * 100.0 / total
    assert np.allclose(half_up(pct), cells), "cell rounding"
    assert np.allclose(half_up(pct.sum(axis=1)), row_margin), "row margin rounding"
    assert np.allclose(half_up(pct.sum(axis=0)), col_margin), "column margin rounding"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("published")
    ap.add_argument("out")
    ap.add_argument("--total", type=int, default=1_000_000)
    args = ap.parse_args()
    names, header, cells, row_margin, col_margin = read_published(args.published)
    counts = reconstruct(cells, row_margin, col_margin, args.total)
    check(counts, cells, row_margin, col_margin)
    with open(args.out, "w", newline="") as fh:
        fh.write(f"# Integer joint counts ({args.total} pixels) reconstructed from {args.published.split('/')[-1]}\n")
        fh.write("# by tools/fixtures/reconstruct_joint.py: every cell and every margin rounds half-up to the published value.\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + header)
        for name, row in zip(names, counts):
            w.writerow([name] + [int(v) for v in row])


if __name__ == "__main__":
    main()
