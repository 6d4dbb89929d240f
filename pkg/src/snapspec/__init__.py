"""Snapshot multiplexed spectrometer simulation toolkit.

Subpackages and modules:

- ``smatrix``:  cyclic 0/1 coding matrices and their closed-form inverses
- ``scene``:    synthetic scenes, spectral cubes, cube file I/O
- ``optics``:   coded-aperture forward model, dispersion, detector noise
- ``recon``:    measurement-matrix normalization and linear spectral recovery
- ``metrics``:  SNR/PSNR, perturbation decomposition, Monte Carlo comparisons
- ``netunmix``: from-scratch trainable network recovering the coded intensity
- ``pipeline``: end-to-end experiments combining all of the above
- ``cli``:      command-line interface
"""

__version__ = "0.1.0"
