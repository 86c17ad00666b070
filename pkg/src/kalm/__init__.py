"""Knowledge-augmented text classification with traceable reasoning chains.

The pipeline encodes text into a context matrix, retrieves knowledge
fragments by cosine similarity, fuses them into the token representations,
reasons with multi-head attention over tokens and knowledge jointly, and
trains under a joint task + explanation-consistency objective.
"""

from .config import TrainConfig, load_config
from .corpus import CorpusExample, generate_synthetic, load_corpus
from .encoding import Vocabulary, build_vocab, pool, tokenize
from .errors import (
    CheckpointVersionError,
    ConfigError,
    DataError,
    DimensionError,
    EmptyInputError,
    KalmError,
    NumericError,
    StateError,
)
from .explain import explain_loss, extract_chain, fact_score, render_rationale
from .fusion import FusionConfig, fuse, predict, reason
from .knowledge import KnowledgeBase, cosine_sim, ingest, retrieve
from .metrics import MetricsReport, accuracy, bleu, evaluate, rouge_1, rouge_l
from .model import Model, ingest_with_initial_encoder, run_forward
from .training import (
    Checkpoint,
    LossBreakdown,
    build_pipeline,
    inject_noise,
    load_checkpoint,
    save_checkpoint,
    total_loss,
    train,
    train_pipeline,
    train_step,
)

__version__ = "0.1.0"
