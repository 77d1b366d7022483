"""How the meta-level SVM treats a subband that carries only noise.

Four subbands, one of them replaced by white noise.  Majority voting gives
that subband a full vote; the stacked linear SVM learns to ignore it.
"""

# %%
import logging

import numpy as np

from subband_svm.corpus import SyntheticSpec, make_synthetic_corpus
from subband_svm.ensemble import classify, extract_subband_set, train_base, train_stacked
from subband_svm.features import SubbandFeatureConfig
from subband_svm.filterbank import design_cmfb

logging.basicConfig(level=logging.ERROR)

NOISY = 2
cfg = SubbandFeatureConfig(S=4, noise_subbands=(NOISY,))
bank = design_cmfb(4)
utts = make_synthetic_corpus(SyntheticSpec(n_utterances=36), seed=4)
train, dev, test = (extract_subband_set(part, bank, cfg, seed=4) for part in (utts[:12], utts[12:28], utts[28:]))
print(f"{len(train)} training, {len(dev)} development, {len(test)} test phones")

# %%
base = train_base(train)
stacked = train_stacked(base, dev_features=[dev])

# mean |w| per subband, averaged over the binary problems
mean_w = np.abs(stacked.weights()).mean(axis=0)
for s, w in enumerate(mean_w):
    print(f"subband {s}: mean |w| = {w:.3f}" + ("   <- noise" if s == NOISY else ""))

# %%
for mode, ens in (("majority", base), ("stacked", stacked)):
    err = 100 * np.mean(classify(ens, test, mode) != test.y)
    print(f"{mode:8s} error {err:.1f}%")
