"""Neural fitness evaluator for evolved feature graphs.

Consumes the engine's filesystem job protocol: each job directory holds
job.json with a graph, an embedding spec, and a seed; this package embeds
toy-task inputs through the graph, trains a GINE network over the result,
and answers with fitness.json (or error.json on a malformed job).
"""

from .embedding import EmbedSpec, FeatureGraphData, embed_elements, parse_graph, parse_spec
from .model import GineLayer, GraphModel, VisionBackbone
from .data import label_of, slice_window, toy_dataset
from .train import TrainerConfig, run_job, train_model

__all__ = [
    "EmbedSpec",
    "FeatureGraphData",
    "GineLayer",
    "GraphModel",
    "TrainerConfig",
    "VisionBackbone",
    "embed_elements",
    "label_of",
    "parse_graph",
    "parse_spec",
    "run_job",
    "slice_window",
    "toy_dataset",
    "train_model",
]
