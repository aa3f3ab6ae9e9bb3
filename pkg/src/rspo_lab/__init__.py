"""Desk-scale laboratory for relative-score policy optimization of masked
diffusion language models: a tiny trainable denoiser, coupled-mask sequence
scoring, feedback objectives with brute-force oracles, verifiable toy
reward tasks, and a reproducible training harness.
"""

from .sequences import MASKED_TOKEN, Sequence, Vocab
from .denoiser import (
    DenoiserParams,
    denoiser_logprob_grad,
    denoiser_logprobs,
    init_params,
    load_params,
    save_params,
)
from .mdm import (
    DecodeConfig,
    alpha_linear,
    decode_semi_ar,
    forward_mask,
    reverse_step,
    sample_completion_group,
)
from .score import (
    ElboEstimate,
    MaskSample,
    RelativeScoreBatch,
    batch_mean_offset,
    center_scores,
    coupled_delta,
    elbo_score,
    sample_mask_set,
    uncentered_scores,
    var_delta,
)
from .objectives import (
    AdvantageConfig,
    LossOutput,
    aw_loss,
    fixed_point_residual,
    group_advantages,
    quad_loss,
    rspo_gradient,
    rspo_loss,
    rspo_weights,
)
from .harness import RunConfig, StepMetrics, adam_update, run_experiment, train_step

__version__ = "0.1.0"

__all__ = [
    "AdvantageConfig",
    "DecodeConfig",
    "DenoiserParams",
    "ElboEstimate",
    "LossOutput",
    "MASKED_TOKEN",
    "MaskSample",
    "RelativeScoreBatch",
    "RunConfig",
    "Sequence",
    "StepMetrics",
    "Vocab",
    "adam_update",
    "alpha_linear",
    "aw_loss",
    "batch_mean_offset",
    "center_scores",
    "coupled_delta",
    "decode_semi_ar",
    "denoiser_logprob_grad",
    "denoiser_logprobs",
    "elbo_score",
    "fixed_point_residual",
    "forward_mask",
    "group_advantages",
    "init_params",
    "load_params",
    "quad_loss",
    "reverse_step",
    "rspo_gradient",
    "rspo_loss",
    "rspo_weights",
    "run_experiment",
    "sample_completion_group",
    "sample_mask_set",
    "save_params",
    "train_step",
    "uncentered_scores",
    "var_delta",
]
