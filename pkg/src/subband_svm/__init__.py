"""Subband SVM phone classification.

Speech waveforms are split into frequency subbands by a cosine-modulated
filter bank; a kernel SVM per subband scores each binary phone problem and
the subband scores are combined by majority voting or a meta-level linear
SVM.  A cepstral (MFCC + VTS) baseline, score fusion and an experiment
harness are included.
"""

__version__ = "0.1.0"
