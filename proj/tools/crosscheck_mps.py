#!/usr/bin/env python3
"""Solve exported MPS models with HiGHS and compare with the recorded objectives.

Usage: crosscheck_mps.py DIR   (DIR as written by `acceptance --export-mps DIR`)
"""
import json
import sys
from pathlib import Path

import highspy


def solve(path):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 0.0)
    if h.readModel(str(path)) != highspy.HighsStatus.kOk:
        raise RuntimeError(f"HiGHS could not read {path}")
    h.run()
    if h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
        raise RuntimeError(f"{path.name}: {h.modelStatusToString(h.getModelStatus())}")
    return h.getInfo().objective_function_value


def main():
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    root = Path(sys.argv[1])
    worst = 0.0
    bad = 0
    for entry in json.loads((root / "objectives.json").read_text()):
        ours = entry["objective"]
        theirs = solve(root / entry["model"])
        rel = abs(ours - theirs) / max(1.0, abs(theirs))
        worst = max(worst, rel)
        ok = rel <= 1e-6
        bad += not ok
        print(f"{entry['model']:12s} stagg {ours:.10g}  highs {theirs:.10g}  rel {rel:.2e}  {'ok' if ok else 'MISMATCH'}")
    print(f"{bad} mismatches, worst relative difference {worst:.2e}")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
