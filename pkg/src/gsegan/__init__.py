"""
Desk-scale laboratory for generalized speech enhancement.

The package corrupts clean speech with four aggressive distortions
(whispering, band reduction, chunk removal, clipping), trains a
conditional least-squares GAN enhancer whose critic carries an
acoustic-regression branch, and scores reconstructions with objective
acoustic metrics (mel-cepstral distortion, F0 RMSE, voicing error).

Everything runs at 16 kHz on raw mono waveforms and is reproducible
from a single seed.
"""

from __future__ import annotations

__version__ = "0.1.0"
