"""mvec: nested prefix-truncatable speaker embeddings.

Train one embedding extractor whose vector prefixes (first m of d
coordinates) are each independently usable for speaker verification and
retrieval, then trade storage and scan latency for accuracy at deploy
time by truncating — no retraining, no separate models per size.
"""

from .config import ExperimentConfig, load as load_config, parse as parse_config, resolve_seed
from .core import NORM_EPS, cosine, l2_normalize, prefix, rng_for, sq_l2_distance
from .data import (
    NONTARGET,
    TARGET,
    SyntheticCorpus,
    TrialList,
    build_trials,
    generate,
    load_corpus,
    load_trials,
    save_corpus,
    save_trials,
)
from .errors import (
    BoundsError,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    DuplicateIdError,
    EmptyInputError,
    FormatError,
    GenerationError,
    IdLookupError,
    LabelError,
    MvecError,
    TrainingDivergedError,
)
from .evaluation import (
    DimensionSweepReport,
    ScoreSet,
    compute_eer,
    dimension_sweep,
    score_trials,
    write_report,
)
from .losses import (
    ADD_TO_TARGET,
    SUBTRACT_FROM_TARGET,
    LossOutput,
    MarginConfig,
    PrefixSchedule,
    aam_logits,
    aam_softmax_loss,
    mrl_combined_loss,
)
from .model import (
    MODE_BASELINE,
    MODE_MRL,
    ClassifierHeads,
    EncoderParams,
    TrainConfig,
    encode,
    encode_batch,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .store import (
    BenchReport,
    VectorStore,
    bench,
    load_vectors,
    save_vectors,
    storage_mb,
    write_bench_report,
)

__version__ = "0.1.0"
