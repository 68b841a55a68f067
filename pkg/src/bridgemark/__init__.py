"""Differentiable diffusion-bridge importance sampling for landmark shapes."""

__version__ = "0.1.0"

from .bridge import (BridgeSpec, ForwardBridgeProposal, ReverseBridgeProposal,
                     forward_bm_bridge_drift, reverse_bridge_drift,
                     sample_reverse_bridge)
from .errors import (AlignmentError, BridgemarkError, ConfigError, DomainError,
                     EstimationError, SimulationBlowup, TrainingDiverged)
from .infer import (AscentConfig, BrownianVarianceFamily, EstimatorConfig,
                    MeanTrajectory, SweepResult, VarianceFit, diffusion_mean,
                    infer_variance, loglik_sweep, pathwise_gradient)
from .likelihood import (LogLikEstimate, estimate_loglik, gauss_quad_form,
                         importance_log_weight, log_step_density)
from .score import (ScoreBatch, ScoreModel, ScoreTrainConfig, analytic_bm_score,
                    score_forward, sinusoidal_embed, stable_score_loss,
                    train_score)
from .sde import (NoiseArray, PathSample, ProcessSpec, TimeGrid, divergence_sigma,
                  euler_maruyama, frozen_brownian_process, kunita_process,
                  sample_noise)
from .shapes import (KernelSpec, LandmarkShape, build_sigma, kernel_eval,
                     load_landmarks_csv, procrustes_align, resample_outline,
                     save_landmarks_csv, synth_shape)
