# flake8: noqa

from importlib.metadata import version as _get_version

from ebsmooth._adversarial import (
    AttackResult,
    AttackSpec,
    TrainConfig,
    TrainMode,
    pgd_attack,
    train_xhat,
)
from ebsmooth._certify import (
    ABSTAIN,
    CertResult,
    OracleResult,
    certify,
    certify_many,
    linear_margin,
    linear_oracle,
    predict,
    rmax,
    sample_counts,
)
from ebsmooth._checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from ebsmooth._classifier import (
    EbClassifier,
    LinearClassifier,
    SoftClassifier,
    classify_hard,
    grad_log_pi,
    log_pi_torch,
    soft_pi,
)
from ebsmooth._config import ExperimentConfig, config_hash, load_config
from ebsmooth._datasets import (
    DatasetSpec,
    LabeledDataset,
    gen_dataset,
    load_dataset,
    load_idx,
)
from ebsmooth._densities import (
    IsoGaussian,
    IsoMixture,
    bayes_classifier_accuracy,
    bayes_estimate,
    beta_of,
    class_posterior,
    sample,
    smoothed_score,
)
from ebsmooth._energy import (
    DeenConfig,
    Energy,
    EnergyNet,
    ModelEnergy,
    QuadraticEnergy,
    deen_loss,
    train_deen,
)
from ebsmooth._errors import (
    ConfigError,
    DomainError,
    FormatError,
    NumericalError,
    SamplerDivergedError,
    TrainingDivergedError,
)
from ebsmooth._experiments import (
    run_certification_curve,
    run_certify,
    run_gen_data,
    run_oracle_check,
    run_train_energy,
    run_train_xhat,
    run_walk_jump,
)
from ebsmooth._report import (
    average_certified_radius,
    certified_accuracy,
    results_dataset,
    write_csv,
)
from ebsmooth._sampler import (
    FlowResult,
    WalkJumpConfig,
    gradient_flow,
    jump,
    langevin_walk,
    trajectory_dataset,
    walk_jump,
)
from ebsmooth._stats import (
    ConfidenceSpec,
    binom_lower_bound,
    rng_stream,
    std_normal_cdf,
    std_normal_inv_cdf,
    std_normal_upper_quantile,
)

__all__ = [
    "ABSTAIN",
    "AttackResult",
    "AttackSpec",
    "average_certified_radius",
    "bayes_classifier_accuracy",
    "bayes_estimate",
    "beta_of",
    "binom_lower_bound",
    "CertResult",
    "certified_accuracy",
    "certify",
    "certify_many",
    "class_posterior",
    "classify_hard",
    "ConfidenceSpec",
    "config_hash",
    "ConfigError",
    "DatasetSpec",
    "deen_loss",
    "DeenConfig",
    "DomainError",
    "EbClassifier",
    "Energy",
    "EnergyNet",
    "ExperimentConfig",
    "FlowResult",
    "FormatError",
    "from_bytes",
    "gen_dataset",
    "grad_log_pi",
    "gradient_flow",
    "IsoGaussian",
    "IsoMixture",
    "jump",
    "LabeledDataset",
    "langevin_walk",
    "linear_margin",
    "linear_oracle",
    "LinearClassifier",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "load_idx",
    "log_pi_torch",
    "ModelEnergy",
    "NumericalError",
    "OracleResult",
    "pgd_attack",
    "predict",
    "QuadraticEnergy",
    "results_dataset",
    "rmax",
    "rng_stream",
    "run_certification_curve",
    "run_certify",
    "run_gen_data",
    "run_oracle_check",
    "run_train_energy",
    "run_train_xhat",
    "run_walk_jump",
    "sample",
    "sample_counts",
    "SamplerDivergedError",
    "save_checkpoint",
    "smoothed_score",
    "soft_pi",
    "SoftClassifier",
    "std_normal_cdf",
    "std_normal_inv_cdf",
    "std_normal_upper_quantile",
    "to_bytes",
    "train_deen",
    "train_xhat",
    "TrainConfig",
    "TrainingDivergedError",
    "TrainMode",
    "trajectory_dataset",
    "walk_jump",
    "write_csv",
]


try:
    __version__ = _get_version("ebsmooth")
except Exception:
    # Local copy or not installed with setuptools.
    __version__ = "999"
