"""Black-box multi-task text attack through clustered substitute models.

Auxiliary texts and their victim outputs are embedded jointly and split into
two clusters; a small substitute classifier learns those cluster labels and
is attacked white-box.  Candidates from several attacks are ranked by how
many bootstrap substitutes they fool.
"""

from .attacks import (AdversarialCandidate, AttackConstraints, NoFlip, fd_attack, generate_candidates,
                      hotflip_attack, textbugger_attack)
from .clustering import assign_deep_labels, kmeans_binary, spectral_binary
from .ensemble import EnsembleConfig, SelectionResult, select_final, train_ensemble, transferability_scores
from .metrics import asr, bleu, rouge_drop
from .representation import HashedNgramEmbedder, OneHotEmbedder, build_joint
from .substitute import SubstituteModel, TrainingConfig, train
from .text import Perturbation, Text, apply_perturbation, cosine_similarity, lexical_embed, normalize_and_tokenize
from .victims import QueryLedger, TaskSpec, VictimResponse, query

__version__ = "0.1.0"
