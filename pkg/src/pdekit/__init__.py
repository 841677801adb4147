"""pdekit: spatial-spectral neural surrogate for 2D PDE fields.

Core pieces: a numpy-backed reverse-mode autodiff engine, truncated real
FFT kernels and spectral convolution, dual spatial/spectral tokenization
with physics conditioning, a selective state-space backbone, a Fourier
operator decoder, synthetic PDE data generators, a curriculum sampler,
and a training/evaluation CLI.
"""

__version__ = "0.1.0"
