"""dlf-distill - Gaussian distillation of deep ensembles into deep latent factor models."""

__version__ = "0.1.0"
