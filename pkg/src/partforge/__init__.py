"""partforge: part-based 3D generation with synchronized dual latent diffusion."""

__version__ = "0.1.0"
