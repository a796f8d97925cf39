"""dmia: a desk-scale lab for membership inference attacks on diffusion models.

The attack injects small noise into a sample once, walks the deterministic
denoising trajectory of a trained noise predictor, and scores membership by
how tightly the predicted-noise sequence clusters. The package also ships
single-query loss and DDIM round-trip baselines plus a full ROC evaluation
harness, all bit-reproducible from one master seed.
"""

from .attack import (
    AGGREGATION_METRICS,
    AttackConfig,
    NoiseSequence,
    aggregate,
    aggregation_centroid,
    aggregation_density,
    aggregation_l1,
    aggregation_mse,
    aggregation_volume,
    attack_sample,
    collect_noise_sequence,
    inject_noise,
    membership_score,
)
from .baselines import BaselineConfig, baseline_record, naive_loss_score, secmi_score
from .datasets import (
    Dataset,
    SplitManifest,
    generate_synthetic,
    load_dataset,
    load_manifest,
    save_dataset,
    save_manifest,
    split,
)
from .denoiser import (
    EpsilonPredictor,
    TrainConfig,
    gradient_check,
    init_predictor,
    load_checkpoint,
    save_checkpoint,
    time_embedding,
    train,
    training_loss,
)
from .diffusion import (
    NoiseSchedule,
    build_linear_schedule,
    ddim_forward_step,
    ddim_reverse_step,
    estimate_x0,
    forward_noise,
)
from .errors import (
    CheckpointCorruptError,
    DatasetCorruptError,
    DmiaError,
    EvalDegenerateError,
    InvalidArgumentError,
    NumericDegenerateError,
    TrainingDivergedError,
)
from .evaluation import (
    EvalReport,
    ScoredRecord,
    asr,
    auc,
    decide,
    emit_plots,
    emit_report,
    evaluate_records,
    read_records,
    roc_curve,
    tpr_at_fpr,
    write_records,
)
from .numerics import SeededRng, as_vector, determinant, gaussian_vector, norm

__version__ = "0.1.0"
