"""Inference adapter between a trained instance-segmentation model and the
ovitrap tile-detections JSON format."""

from .bridge import BridgeConfig, BridgeError, infer_tiles, load_model

__version__ = "0.1.0"
