"""A small white-noise sweep comparing the MFCC, subband and fused front-ends.

Smaller than the acceptance run so it finishes in a few seconds; expect noisy
numbers.  Results land in ``demo_runs/``.
"""

# %%
import logging

from subband_svm.harness import ExperimentConfig, run_sweep

logging.basicConfig(level=logging.ERROR)

cfg = ExperimentConfig.from_dict({
    "corpus": {"synthetic": {"n_classes": 4}, "seed": 0, "n_train": 30, "n_dev": 30, "n_test": 10},
    "front_ends": ["mfcc", "subband", "majority", "fused"],
    "snr_grid": ["quiet", 12, 0, -6],
    "S": 8,
    "gmm_components": 8,
    "output_dir": "demo_runs/sweep",
    "cache_dir": "demo_runs/cache",
})
table = run_sweep(cfg)

# %%
print(open("demo_runs/sweep/plot/white_anechoic.dat").read())
