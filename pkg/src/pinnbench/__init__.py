"""PINN training engine and collocation-sampling benchmark harness.

Importing the package switches JAX to 64-bit mode.  Derivative checks and
L-BFGS run in float64; training can drop Adam steps to float32 (see
``trainer.PRECISIONS``).
"""

import os

# The thunk-based XLA CPU runtime is ~15% slower on the small dense training
# kernels used here; keep the classic one unless the caller chose otherwise.
if "xla_cpu_use_thunk_runtime" not in os.environ.get("XLA_FLAGS", ""):
    os.environ["XLA_FLAGS"] = (os.environ.get("XLA_FLAGS", "") + " --xla_cpu_use_thunk_runtime=false").strip()

import jax  # noqa: E402

jax.config.update("jax_enable_x64", True)

from pinnbench.errors import ConfigError, DomainError, NumericError  # noqa: E402

__version__ = "0.1.0"

__all__ = ["ConfigError", "DomainError", "NumericError", "__version__"]
