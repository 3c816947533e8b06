"""Latent evidence extraction for claim verification.

Exact and relaxed MAP inference over a chain factor graph with a cardinality
budget and adjacent-pair bonuses, a differentiable l2-regularized relaxation
(SCALE), pipeline and joint extractor baselines, two verifiers and a joint
training and evaluation harness over synthetic corpora with planted evidence.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import LABELS, ClaimInstance, GenConfig, generate_corpus, read_jsonl, write_jsonl
from .differentiable import (
    HardKumaParams,
    MovingAverageBaseline,
    fusedmax,
    gumbel_sigmoid_sample,
    hardkuma_sample,
    reinforce_gradient,
    scale_backward,
    sparsemax,
)
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DimensionError,
    LatentEvidenceError,
    NumericalError,
    ParameterError,
    SizeError,
    StateError,
)
from .evaluation import MetricsReport, budget_sweep, evaluate
from .extractors import KINDS, ExtractionResult, ExtractorConfig
from .factor_graph import (
    FactorGraphSpec,
    ImportanceScores,
    SelectionMask,
    SolverConfig,
    budget_projection,
    map_bruteforce,
    map_exact_dp,
    scale_forward,
    scale_forward_tape,
    score_assignment,
)
from .fused_lasso import tv_prox
from .model import ModelConfig, encode_instance, init_params
from .text import SentenceEmbedding, hashed_embedding, tfidf_fit, tfidf_score
from .training import TrainConfig, joint_train
from .verifiers import VerdictDistribution, graph_verify, mlp_verify

__version__ = "0.1.0"
