"""kdalign: multilingual vision-language embedding distillation at desk scale.

Trains a small student projection head against frozen teacher embeddings with
five distillation objectives (feature MSE, English-controlled MSE, soft-logit
cross-entropy, contrastive alignment, and queue-based distribution
replication) and evaluates with retrieval recall, MRR, similarity VQA, and
language-purity clustering.
"""

from .negqueue import NegativeQueue
from .objectives import (AnchorTriple, LossReport, Temperatures, combined_loss,
                         dr_distribution, dr_loss, ed_loss, fd_loss, mcl_loss,
                         sd_loss)
from .tensormath import cosine_sim, cross_entropy, pairwise_cosine, softmax

__all__ = [
    "AnchorTriple", "LossReport", "Temperatures", "NegativeQueue",
    "fd_loss", "ed_loss", "sd_loss", "mcl_loss", "dr_loss", "dr_distribution",
    "combined_loss", "cosine_sim", "softmax", "pairwise_cosine",
    "cross_entropy",
]

__version__ = "0.1.0"
