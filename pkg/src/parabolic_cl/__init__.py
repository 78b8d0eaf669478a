"""Parabolic continual learning: replay training along Brownian bridges,
with a finite-difference / Feynman-Kac oracle for the underlying PDE."""

from .bridge import BridgePath, BridgeSpec, sample_bridge, sample_paired_bridges
from .buffer import ReservoirBuffer, Sample, filtered_insert, maybe_insert, sample_batch
from .errors import ConfigError, IngestionError, ParameterError, ShapeError, TrainingError
from .fkpde import BoundarySet, FkEstimate, Grid1D, check_maximum_principle, estimate_fk, solve_fd
from .loss import DriftDescriptor, PclConfig, girsanov_weight, pcl_loss
from .net import DenseNetwork, Layer, backward, forward, init_network, sgd_step, soft_cross_entropy
from .streams import StreamConfig, TaskStream, corrupt_labels, make_stream
from .trainer import RunConfig, RunRecord, evaluate, run

__version__ = "0.1.0"
