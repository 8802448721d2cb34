"""Autoencoders for feature learning: visualization, denoising, anomaly detection and semantic hashing."""

from .models import (
    AutoencoderModel,
    NetworkSpec,
    TrainConfig,
    autoencoder,
    autoencoder_denoising,
    autoencoder_sparse,
    build_network,
    conv,
    decode,
    dense,
    encode,
    load_model,
    noise,
    output,
    parse_spec,
    reconstruct,
    save_model,
    train,
)

__version__ = "0.1.0"
