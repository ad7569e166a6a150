"""Residential vs non-residential building classification.

Extracts per-building features from a DEM raster and footprint polygons,
prunes correlated features, trains a deep MLP with the AMSGrad optimizer,
and emits classification reports and georeferenced predictions.
"""

from .geodata import (
    DemGrid,
    FootprintRecord,
    cell_center,
    parse_ascii_grid,
    parse_footprints,
    serialize_ascii_grid,
    serialize_footprints,
    write_predictions,
)
from .geometry import ZonalStats, node_count, point_in_polygon, polygon_area_sqm, zonal_stats
from .features import (
    AttributeRow,
    AttributeTable,
    EncodingSpec,
    FeatureConfig,
    FeatureMatrix,
    SplitIndices,
    build_attribute_table,
    correlation_matrix,
    encode_features,
    prune_features,
    read_table_csv,
    stratified_split,
    write_table_csv,
)
from .network import (
    ForwardTrace,
    Mlp,
    OptimizerState,
    amsgrad_step,
    backward,
    bce_loss,
    forward,
    forward_probs,
    init_mlp,
    init_optimizer,
    leaky_relu,
    load_model,
    relu,
    save_model,
    sigmoid,
)
from .training import (
    ClassificationReport,
    TrainConfig,
    TrainHistory,
    accuracy,
    classification_report,
    f1_score,
    predict,
    train,
)
from .synth import (
    PlantedRule,
    SceneConfig,
    SynthConfig,
    generate,
    rasterize_synthetic_scene,
)

__version__ = "0.1.0"
