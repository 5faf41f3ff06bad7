"""Segmentation-model adapter for the mapseg stdio wire protocol."""

__version__ = "0.1.0"

from .models import AdapterConfig, TilePredictor, load_model  # noqa: F401
from .serve import serve  # noqa: F401
