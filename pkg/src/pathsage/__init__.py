"""Graph node classification by random-path sampling and transformer
aggregation, on a self-contained numpy tensor engine."""

from .graph import Graph, LabelSet, SplitMasks, load_dataset, neighbors_of
from .model import ModelConfig, PathSageModel
from .sampler import PathBatch, SamplePlan, derive_sample_seed, sample_paths
from .trainer import OptimizerState, TrainConfig, fit, lr_at

__version__ = "0.1.0"

__all__ = [
    "Graph", "LabelSet", "SplitMasks", "load_dataset", "neighbors_of",
    "ModelConfig", "PathSageModel",
    "PathBatch", "SamplePlan", "derive_sample_seed", "sample_paths",
    "OptimizerState", "TrainConfig", "fit", "lr_at",
    "__version__",
]
