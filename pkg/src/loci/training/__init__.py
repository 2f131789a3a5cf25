"""Losses, optimizer, curriculum, checkpoints and the training loop."""
from loci.training.curriculum import Curriculum, learning_rate
from loci.training.losses import TERMS, LossReport, LossWeights
from loci.training.optim import RAdam

__all__ = ["Curriculum", "LossReport", "LossWeights", "RAdam", "TERMS", "learning_rate"]
