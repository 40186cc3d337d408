"""gridpilot: a desk-scale chain-of-thought driving stack.

The package trains and evaluates, end to end on a CPU, a four-stage driving
pipeline inside a synthetic 2-D kinematic micro-world:

1. perception  - a BEV raster encoder with map / object / BEV-patch tokenizers
2. reasoning   - a small transformer core with shared soft-prompt tokens that
                 answers templated VQA questions and emits condition embeddings
3. worldmodel  - an autoencoder plus a condition-driven latent denoiser that
                 predicts future BEV frames with truncated DDIM sampling
4. planner     - K-Means trajectory anchors refined by a conditional action
                 denoiser that also scores each anchor

Supporting modules: `autodiff`/`nn`/`optim` (float64 reverse-mode autodiff),
`diffusion` (schedules and DDIM algebra), `sim` (scenario generation, bicycle
kinematics, BEV rasterization, expert demonstrations), `evaluation` (open- and
closed-loop metrics, ablation drivers, reports), and a `gridpilot` CLI that
orchestrates data generation, the staged training recipe, and evaluation.

See README.md for the pipeline walkthrough and demos/ for narrative scripts.
"""

from .autodiff import NumericsError, Tensor, forward_backward, no_grad
from .optim import OptimizerState, sgd_step

__version__ = "0.1.0"

__all__ = [
    "NumericsError",
    "OptimizerState",
    "Tensor",
    "forward_backward",
    "no_grad",
    "sgd_step",
    "__version__",
]
