"""Historical-map segmentation toolkit: synthesis, inference, evaluation."""

__version__ = "0.1.0"

from .classes import (  # noqa: F401
    ALL_CLASSES,
    CLASS_NAMES,
    GEOGRAPHIC_CLASSES,
    NUM_CLASSES,
    LabelMask,
    SemanticClass,
)
from .geodata import (  # noqa: F401
    BBox,
    GeoPoint,
    MapScale,
    ZoomLevel,
    bbox_for,
    ground_resolution,
    lonlat_to_mercator,
    mercator_to_lonlat,
    scale_to_zoom,
)
from .features import VectorFeature, VectorFeatureSet, filter_features, load_features  # noqa: F401
from .rasterize import rasterize_template  # noqa: F401
from .colors import ColorModel, fit_color_model, load_default_color_model, sample_color  # noqa: F401
from .style import StyleConfig, stylize  # noqa: F401
from .relief import ElevationGrid, hillshade, isolines, render_relief  # noqa: F401
from .annotate import annotate  # noqa: F401
from .degrade import apply_degradations  # noqa: F401
from .synthesize import GenerationConfig, SynthSample, generate_corpus, generate_sample  # noqa: F401
from .inference import LogitMap, TileGrid, multiscale_infer, plan_tiles, run_tiled  # noqa: F401
from .backends import ExternBackend, HeuristicBackend, OracleBackend, SegmentationBackend  # noqa: F401
from .evaluation import (  # noqa: F401
    ConfusionMatrix,
    MetricsReport,
    PerImageCounts,
    aggregate,
    class_area,
    confusion,
    per_image_metrics,
)
from .bias import DesignMatrix, MetadataRecord, OlsResult, build_design, ols_fit  # noqa: F401
