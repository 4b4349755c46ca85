"""abpsynth: arterial blood pressure waveform synthesis from single-site PPG.

Modules:

* :mod:`abpsynth.dataio` -- record IO, synthetic corpus generation, splits
* :mod:`abpsynth.preprocess` -- filtering, screening, detrending, alignment,
  segmentation, normalization
* :mod:`abpsynth.spectral` -- orthonormal DCT-II pair and truncation
* :mod:`abpsynth.fdreg` -- coefficient-space ridge / kernel-ridge regression
* :mod:`abpsynth.nn` -- from-scratch encoder-decoder translation model
* :mod:`abpsynth.evaluation` -- error metrics, AAMI check, BHS grading
* :mod:`abpsynth.cli` -- command-line pipeline front end
"""

__version__ = "0.1.0"
