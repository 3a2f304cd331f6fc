"""Deep-image-prior reconstruction built on hand-written float64 layers."""

from .network import Autoencoder, AutoencoderSpec, ParamLayout, build_network
from .reconstruct import DipConfig, dip_reconstruct, grad_theta
from .homogeneous import gtau_scale, homogeneous_dip

__all__ = [
    "Autoencoder",
    "AutoencoderSpec",
    "ParamLayout",
    "build_network",
    "DipConfig",
    "dip_reconstruct",
    "grad_theta",
    "gtau_scale",
    "homogeneous_dip",
]
