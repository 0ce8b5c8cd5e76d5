"""Fidelity-embedded GAN denoising for low-dose CT, at desk scale."""
__version__ = "0.1.0"
