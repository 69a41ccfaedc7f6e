"""Metadata-orthogonal graph embedding training."""

from .errors import ConfigError, DatasetMissingError, DimensionError, NumericalError, ParseError
from .graph import (CooccurrenceStore, Graph, WalkCorpus, build_cooccurrence, filter_walks,
                    generate_walks, load_edge_list, load_metadata)
from .linalg import (ProjectionBasis, distance_correlation, metadata_leakage, orthonormal_basis,
                     pca_2d, project)
from .model import (ModelState, TrainConfig, combined_embedding, init_model, load_checkpoint,
                    metadata_importance, random_embedding, save_checkpoint)
from .train import batch_gradients, pair_loss, smoothing, train, train_step

__version__ = "0.1.0"
