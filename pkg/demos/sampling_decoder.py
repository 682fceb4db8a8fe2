"""Compressing a structure by sampling its cells, then decoding the dataset.

Runs path and cell sampling on the translation table and reports how
many database bits the clipped majority vote recovers, first at the
budgeted sample size and then with larger samples.
"""

from nnsexpansion.cli import decode_experiment

for s in (None, 8, 32):
    for mode in ("path", "cell"):
        row = decode_experiment(10, 2, 32, 0.05, mode, 1, seed=0, m=32, s=s)
        label = "budget" if s is None else f"s = {s}"
        print(f"{label:>8} {mode}: s = {row['s']:3d}, recovered {row['recovered_fraction']:.3f}, "
              f"undecodable {row['undecodable']}, mean Rep mass {row['mean_rep_mass']:.4f}")
