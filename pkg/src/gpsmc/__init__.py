"""GP hyperparameter marginalization with a data-tempered SMC sampler."""

__version__ = "0.1.0"

from ._backend import kernels as backend
from .baselines import (GridSpec, PointEstimate, WeightedSamples, grid_posterior,
                        optimize_point_estimate, prior_importance_sampler)
from .changepoint import (BocpdDetector, GaussianMeanSegment, GpSegment, HazardSpec,
                          RunLengthPosterior, bocpd_step, run_length_map, threshold_segments)
from .errors import CholeskyError, ConfigError, DegeneracyError, DimensionError, GpsmcError
from .gp import (Dataset, GpModel, KernelSpec, MeanSpec, PredictiveGaussian, kernel_matrix, msll,
                 smse)
from .prediction import PredictiveMixture, mixture_logpdf, mixture_moments, mixture_predict
from .priors import (Fixed, GaussianOnLog, GaussianOnNatural, PriorSpec, UniformOnLog, log_prior,
                     sample_prior)
from .smc import ParticleSystem, SmcConfig, TemperingSequence, extend_online, run
