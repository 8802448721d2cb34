from .anomaly import AnomalyConfig, run_anomaly_pipeline
from .denoise import DenoiseConfig, run_denoising_pipeline
from .hashing import HashConfig, run_hashing_pipeline
from .metrics import (
    AnomalyReport,
    HashCurve,
    cosine_distance,
    detect_anomalies,
    hamming,
    hash_codes,
    reconstruction_errors,
)
from .synthetic import TimeSeries, inject_anomaly, lorenz_generate, make_clusters, make_shapes, make_topics
from .visualize import EmbeddingResult, VisualizeConfig, run_visualization_pipeline
