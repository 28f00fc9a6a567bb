"""fensemble - factorization ensembles, their quantized spectrum and π_QM."""

__version__ = "0.1.0"
