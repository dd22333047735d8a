from .experiment import (KNOWN_MODELS, ExperimentConfig, case_scores,
                         rolling_experiment, score_table)
from .features import (SOLAR_SCHEMA, VISIBILITY_SCHEMA, FeatureSchema,
                       FeatureStandardizer, build_features, seasonal_pair)
from .io import DataError, atomic_write, ingest, write_dataset
from .synthetic import (SyntheticSpec, generate_synthetic, random_stations,
                        spatial_cholesky)

__all__ = [
    "ExperimentConfig", "KNOWN_MODELS", "rolling_experiment", "score_table",
    "case_scores", "FeatureSchema", "FeatureStandardizer", "SOLAR_SCHEMA",
    "VISIBILITY_SCHEMA", "build_features", "seasonal_pair", "DataError",
    "ingest", "write_dataset", "atomic_write", "SyntheticSpec",
    "generate_synthetic", "random_stations", "spatial_cholesky",
]
