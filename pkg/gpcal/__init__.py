# Bayesian inversion with Gaussian-process model discrepancy
__version__ = "1.0.0"
