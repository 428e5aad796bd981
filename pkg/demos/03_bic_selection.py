"""Choose (lambda1, lambda2) by BIC and compare ER with composite ER.

Run:  python demos/03_bic_selection.py
"""

import numpy as np

from gecer import ExpectileGrid
from gecer.selection import TuningGrid, grid_search
from gecer.simulation import SimulationConfig, generate, metric_ae, metric_tp_fp

config = SimulationConfig(n=150, p=30, q=3, n_nonzero_alpha=3, n_nonzero_beta=4,
                          n_nonzero_gamma=4, error_kind="scaled_t4", seed=5)
data, truth = generate(config)
tuning = TuningGrid()          # {0.1, 0.5, 1, 1.5, 2} squared, r = 3

for label, grid, mode in [("ER(0.5)", ExpectileGrid.single(0.5), "er"),
                          ("CER(9)", ExpectileGrid.equally_spaced(9), "cer")]:
    sel = grid_search(data, grid, tuning, mode=mode)
    table = sel.bic_table
    bics = np.array([row["bic"] for row in table]).reshape(5, 5)
    print(f"\n{label}: BIC over lambda1 (rows) x lambda2 (columns)")
    print(np.array2string(bics, precision=3, suppress_small=True))
    best = sel.best_fit
    tp, fp = metric_tp_fp(best.coefficients, truth)
    print(f"selected lambda1={best.penalty.lambda1}, lambda2={best.penalty.lambda2}, "
          f"df={best.df}, AE={metric_ae(best.coefficients, truth):.2f}, TP={tp}, FP={fp}")
