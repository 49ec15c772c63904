"""Offline penultimate-layer feature dumps for pretrained vision models."""

from .extract import ExtractJob, discover_images, extract
from .models import REGISTRY, ModelSpec, load_encoder, model_spec

__version__ = "0.1.0"
