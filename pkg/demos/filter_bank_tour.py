"""A tour of the cosine-modulated filter bank on a synthetic phone."""

# %%
import numpy as np

from subband_svm.corpus import SyntheticSpec, make_synthetic_corpus
from subband_svm.filterbank import analyze, design_cmfb, synthesize

# one sentence from the synthetic corpus; the first labelled phone is enough
utt = make_synthetic_corpus(SyntheticSpec(n_utterances=1), seed=0)[0]
phone = utt.phones[0]
x = utt.samples[phone.start:phone.end]
print(f"phone class {phone.class_id}, {len(x)} samples")

# %%
# Each channel is the prototype window shifted to its own frequency band.
bank = design_cmfb(8)
spectra = np.abs(np.fft.rfft(bank.filters, 1024, axis=1))
peaks = spectra.argmax(axis=1) / 1024 * 16000
print("frequency of peak response per channel (Hz):", np.round(peaks).astype(int))

# %%
# Analysis is maximally decimated: S channels, each about len(x) / S long.
sb = analyze(x, bank)
print("components:", sb.components.shape)
share = np.sum(sb.components**2, axis=1) / np.sum(x**2)
for s, e in enumerate(share, 1):
    print(f"  channel {s}: {100 * e:5.1f}% of the energy")

# %%
# The bank is orthogonal, so synthesis undoes analysis to rounding error.
err = np.max(np.abs(synthesize(sb, bank) - x))
print(f"reconstruction error {err:.1e}")
