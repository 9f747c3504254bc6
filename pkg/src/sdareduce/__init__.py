"""Stacked de-noising autoencoders for dimensionality reduction of
high-content screening feature data, with PCA and kernel PCA baselines and
Gaussian-mixture homogeneity evaluation."""

__version__ = "0.1.0"
