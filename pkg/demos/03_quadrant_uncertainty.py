"""Train small ensembles on the four-cluster task and compare their uncertainty.

A plain ensemble is confident far from the data. Repelling the members'
hidden-layer Grams makes them disagree off-distribution, and adding
boundary OOD points with an entropy bonus sharpens the separation further.
This demo uses a shortened schedule; the full study runs through the CLI.

Run: python demos/03_quadrant_uncertainty.py
"""

from hecka import experiments as E

SHORT = ["train.steps=300", "train.members=10", "eval.grid_resolution=40"]

print(f"{'method':16s} {'test acc':>8s} {'PE inlier':>10s} {'PE far':>8s} {'AUROC':>7s} {'CKA':>6s}")
for method in ("ensemble", "ensemble_he", "ensemble_ood_he"):
    cfg = E.resolve_config("quadrants", overrides=[f"method={method}", *SHORT])
    r = E.run_quadrants(cfg, seed=0)
    print(f"{method:16s} {r['test_accuracy']:8.3f} {r['mean_pe_inlier']:10.3f} {r['mean_pe_far']:8.3f} "
          f"{r['auroc_pe']:7.3f} {r['last_hidden_pairwise_cka']:6.3f}")
