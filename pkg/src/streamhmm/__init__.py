"""streamhmm: online segmentation and classification of streaming sequences.

A sticky HDP-HMM is bootstrapped once on a small labeled prefix, then updated
batch by batch: each batch is segmented and classified with a blocked Gibbs
sampler, the posterior becomes the prior for the next batch, and the raw
frames are discarded.  Per-parameter learning rates (means, covariances,
global state weights, transition rows) are resampled alongside the model and
control how strongly the carried-over prior resists the incoming batch, so
the model can follow drifting classes and admit brand-new ones without
forgetting stable structure.
"""

from .errors import (
    InputError,
    NumericError,
    ParameterError,
    SnapshotError,
    StreamHmmError,
)
from .state import HdpHyperparams, LabeledSequence, ModelState, init_from_bootstrap
from .rates import RateConfig
from .runner import BatchPlan, RunResult, run_online
from .estimator import OnlineHdpHmm
from .metrics import EvalReport, evaluate
from .synth import SynthConfig, gen_combined, gen_newclass, gen_shifting, gen_stationary

__version__ = "0.1.0"

__all__ = [
    "BatchPlan",
    "EvalReport",
    "HdpHyperparams",
    "InputError",
    "LabeledSequence",
    "ModelState",
    "NumericError",
    "OnlineHdpHmm",
    "ParameterError",
    "RateConfig",
    "RunResult",
    "SnapshotError",
    "StreamHmmError",
    "SynthConfig",
    "evaluate",
    "gen_combined",
    "gen_newclass",
    "gen_shifting",
    "gen_stationary",
    "init_from_bootstrap",
    "run_online",
    "__version__",
]
