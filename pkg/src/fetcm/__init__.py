"""Filter-enhanced transformer click model (FE-TCM) on a small numpy autodiff engine."""

from .clicklog import Session, QueryRecord, DocumentImpression, GroundTruth, Vocabulary
from .model import ClickModel, ModelConfig
from .training import TrainConfig, train

__all__ = ["Session", "QueryRecord", "DocumentImpression", "GroundTruth", "Vocabulary",
           "ClickModel", "ModelConfig", "TrainConfig", "train"]
__version__ = "0.1.0"
