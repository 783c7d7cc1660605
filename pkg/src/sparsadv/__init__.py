"""Adversarial perturbations seen through sparse representations.

Submodules: ``core`` (random streams, linear algebra), ``synth`` (synthetic
sparse data), ``coders`` (OMP, LASSO, LISTA), ``attacks`` (PGD and the
dictionary attacks), ``analysis`` (error decompositions, correlation
densities, spectra, hypothesis tests), ``cls`` (classification testbed),
``experiments`` and ``cli``.
"""

__version__ = "0.1.0"
