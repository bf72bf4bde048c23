"""Physical-layer authentication workbench built on MIMO channel state information.

Simulates noisy CSI measurement, implements the per-element threshold
hypothesis test with its analytic false-accept probability, trains a GAN
whose discriminator authenticates transmitters, and benchmarks one-class
detectors, with per-SNR accuracy reporting.
"""

from .rng import RngStream
from .channel import (
    NoiseModel,
    add_measurement_error,
    estimate_csi,
    flatten_csi,
    sample_csi,
    unflatten_csi,
)
from .threshold import AuthDecision, Threshold, decide, false_accept_rate_sim, lambda_ave
from .analytic import (
    DiskRegion,
    GaussianSpec,
    auth_probability,
    disk_probability_exact,
    disk_probability_paper,
    q_function,
    sweep_auth_probability,
)
from .datasets import (
    Dataset,
    DatasetManifest,
    NefariousOffsets,
    Sample,
    build_accidental,
    build_master,
    build_nefarious,
    default_nefarious_offsets,
    read_dataset,
    split_train_test,
    write_dataset,
)
from .neuralnet import AdamState, DenseLayer, Mlp, adam_step, backward, bce_loss, forward
from .gan import TrainConfig, TrainReport, authenticate, build_discriminator, build_generator, train_gan
from .detectors import (
    ConvergenceError,
    IForestModel,
    LofModel,
    OcsvmModel,
    iforest_fit,
    lof_fit,
    ocsvm_fit,
)
from .evaluate import AccuracyCurve, ConfusionMatrix, accuracy_curve, emit_report, evaluate

__version__ = "0.1.0"
