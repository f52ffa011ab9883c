#!/usr/bin/env python3
"""Convert a MATPOWER case file into the scopf grid JSON schema.

Only the data the DC model needs is kept: bus net loads (Pd), in-service
branches (susceptance 1/(x*tap), rateA) and in-service generators.

Polynomial costs are sampled into 5 equal-width linear segments over
[Pmin, Pmax]; piecewise-linear costs are copied. When the case has no
thermal ratings (rateA of 0 or >= 9900), pass --derive-ratings: every line
gets  max(floor, margin * |f|)  rounded up to --rating-step. f is the line
flow of the unconstrained economic dispatch at --rating-load-scale of the
nominal load; with --rating-basis contingency it is the largest flow over
that dispatch and its post-contingency APR responses, and the rating is
never below --nominal-margin times the dispatch's own flow (radial lines
carry flow no redispatch can change). --critical-contingency GEN_ID rates
every line to cover all other contingencies with --headroom and applies
--rating-margin only to the flows after losing GEN_ID, so that single
contingency is the one that binds.

Usage:
  matpower_to_grid.py case118.m -o case118.json --gamma 0.2 --derive-ratings
"""

import argparse
import json
import math
import re
import sys

import numpy as np
from scipy.optimize import linprog


def parse_matrix(text, name):
    m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
    if not m:
        return None
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";").strip()
        if not line:
            continue
        rows.append([float(v) for v in line.replace(",", " ").split()])
    return rows


def pwl_from_cost(row, pmin, pmax, segments):
    model, n = int(row[0]), int(row[3])
    if model == 1:
        pts = [(row[4 + 2 * k], row[5 + 2 * k]) for k in range(n)]
        return [[p, c] for p, c in pts]
    coeffs = row[4:4 + n]
    c2, c1, c0 = ([0.0] * (3 - n) + list(coeffs))[-3:]
    hi = pmax if pmax > pmin else pmin + 1.0
    out = []
    for k in range(segments + 1):
        p = pmin + (hi - pmin) * k / segments
        out.append([round(p, 6), round(c2 * p * p + c1 * p + c0, 6)])
    return out


def ptdf(nbus, ref, lines):
    """K0 (lines x buses): flow per MW injected at a bus and withdrawn at ref."""
    b = np.zeros((nbus, nbus))
    s = np.zeros((len(lines), nbus))
    for k, (f, t, y) in enumerate(lines):
        b[f, f] += y
        b[t, t] += y
        b[f, t] -= y
        b[t, f] -= y
        s[k, f] = y
        s[k, t] = -y
    keep = [i for i in range(nbus) if i != ref]
    k0 = np.zeros((len(lines), nbus))
    k0[:, keep] = s[:, keep] @ np.linalg.inv(b[np.ix_(keep, keep)])
    return k0


def economic_dispatch(gens, total):
    """Least-cost dispatch with balance and bounds only (epigraph LP)."""
    ng = len(gens)
    c = np.concatenate([np.zeros(ng), np.ones(ng)])
    a_ub, b_ub = [], []
    for i, g in enumerate(gens):
        pts = g["cost"]
        for k in range(len(pts) - 1):
            slope = (pts[k + 1][1] - pts[k][1]) / (pts[k + 1][0] - pts[k][0])
            row = np.zeros(2 * ng)
            row[i] = slope
            row[ng + i] = -1.0
            a_ub.append(row)
            b_ub.append(slope * pts[k][0] - pts[k][1])
    a_eq = [np.concatenate([np.ones(ng), np.zeros(ng)])]
    bounds = [(g["p_min"], g["p_max"]) for g in gens] + [(None, None)] * ng
    res = linprog(c, A_ub=np.array(a_ub), b_ub=b_ub, A_eq=np.array(a_eq), b_eq=[total], bounds=bounds,
                  method="highs")
    if res.status != 0:
        raise SystemExit("economic dispatch failed: " + res.message)
    return res.x[:ng]


def apr_dispatch(gens, g, s, total):
    """Post-contingency dispatch for the loss of generator s (bisection on n)."""
    r = np.array([x["gamma"] * x["capacity"] for x in gens])
    gmax = np.array([x["p_max"] for x in gens])

    def respond(n):
        out = np.clip(g + n * r, 0.0, gmax)
        out[s] = 0.0
        return out

    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if respond(mid).sum() < total:
            lo = mid
        else:
            hi = mid
    return respond(hi)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("case")
    ap.add_argument("-o", "--output", required=True)
    ap.add_argument("--name")
    ap.add_argument("--gamma", type=float, default=0.2, help="APR participation for every generator")
    ap.add_argument("--segments", type=int, default=5)
    ap.add_argument("--derive-ratings", action="store_true")
    ap.add_argument("--rating-load-scale", type=float, default=1.0)
    ap.add_argument("--rating-basis", choices=["nominal", "contingency"], default="nominal")
    ap.add_argument("--nominal-margin", type=float, default=1.1)
    ap.add_argument("--critical-contingency", type=int)
    ap.add_argument("--headroom", type=float, default=1.05)
    ap.add_argument("--rating-margin", type=float, default=1.2)
    ap.add_argument("--rating-floor", type=float, default=50.0)
    ap.add_argument("--rating-step", type=float, default=5.0)
    args = ap.parse_args()

    text = open(args.case).read()
    bus = parse_matrix(text, "bus")
    gen = parse_matrix(text, "gen")
    branch = parse_matrix(text, "branch")
    gencost = parse_matrix(text, "gencost")
    if not (bus and gen and branch and gencost):
        raise SystemExit("case file must define mpc.bus, mpc.gen, mpc.branch and mpc.gencost")

    ref = next((int(r[0]) for r in bus if int(r[1]) == 3), int(min(r[0] for r in bus)))
    buses = [{"id": int(r[0]), "load": r[2]} for r in bus]
    index = {b["id"]: k for k, b in enumerate(buses)}

    lines = []
    for k, r in enumerate(branch):
        if len(r) > 10 and r[10] == 0:
            continue
        tap = r[8] if r[8] != 0 else 1.0
        lines.append({"id": k + 1, "from": int(r[0]), "to": int(r[1]), "susceptance": round(1.0 / (r[3] * tap), 9),
                      "capacity": r[5]})

    gens = []
    for k, r in enumerate(gen):
        if r[7] <= 0:
            continue
        pmax, pmin = r[8], r[9]
        gens.append({"id": k + 1, "bus": int(r[0]), "p_min": pmin, "p_max": pmax, "capacity": pmax,
                     "gamma": args.gamma, "cost": pwl_from_cost(gencost[k], pmin, pmax, args.segments)})

    unrated = any(l["capacity"] <= 0 or l["capacity"] >= 9900 for l in lines)
    if args.derive_ratings or unrated:
        if not args.derive_ratings:
            print("note: case has unrated lines; deriving ratings", file=sys.stderr)
        k0 = ptdf(len(buses), index[ref],
                  [(index[l["from"]], index[l["to"]], l["susceptance"]) for l in lines])
        d = np.array([b["load"] for b in buses]) * args.rating_load_scale
        g = economic_dispatch(gens, d.sum())
        print("economic dispatch:", {gi["id"]: round(x, 1) for gi, x in zip(gens, g) if x > 1e-6}, file=sys.stderr)
        incidence = np.zeros((len(buses), len(gens)))
        for k, gi in enumerate(gens):
            incidence[index[gi["bus"]], k] = 1.0
        base = np.abs(k0 @ (incidence @ g - d))
        worst = base.copy()
        critical = None
        if args.critical_contingency is not None:
            critical = next(k for k, gi in enumerate(gens) if gi["id"] == args.critical_contingency)
        others = base * args.headroom
        if args.rating_basis == "contingency":
            for s in range(len(gens)):
                gs = apr_dispatch(gens, g, s, d.sum())
                flow = np.abs(k0 @ (incidence @ gs - d))
                if critical is None:
                    worst = np.maximum(worst, flow)
                elif s == critical:
                    worst = flow
                else:
                    others = np.maximum(others, flow * args.headroom)
        for k, (l, f, f0) in enumerate(zip(lines, worst, base)):
            cap = max(args.rating_floor, args.rating_margin * f)
            if args.rating_basis == "contingency":
                cap = max(cap, args.nominal_margin * f0)
                if critical is not None:
                    cap = max(cap, others[k])
            l["capacity"] = math.ceil(cap / args.rating_step) * args.rating_step

    doc = {"name": args.name or re.sub(r"\.m$", "", args.case.split("/")[-1]), "ref_bus": ref,
           "buses": buses, "lines": lines, "generators": gens, "contingencies": "all"}
    with open(args.output, "w") as out:
        json.dump(doc, out, indent=1)
        out.write("\n")
    print(f"{args.output}: {len(buses)} buses, {len(lines)} lines, {len(gens)} generators, ref bus {ref}")


if __name__ == "__main__":
    main()
