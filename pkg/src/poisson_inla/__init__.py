"""Approximate Bayesian restoration of Poisson-corrupted grayscale images.

The latent intensity field carries a proper ICAR prior on the pixel lattice;
the posterior is approximated by integrated nested Laplace approximations,
with a Langevin MCMC sampler as a reference.
"""

__version__ = "0.1.0"

from .errors import InlaError, IoError, NumericalError, ValidationError  # noqa: E402
from .gmrf import GridGraph, IcarHyper, build_icar_precision  # noqa: E402
from .imaging import ContrastParams, PixelImage, corrupt_poisson, intensity_forward, intensity_inverse, read_pgm, write_pgm  # noqa: E402
from .inla import InlaConfig, InlaResult, run_inla  # noqa: E402
from .laplace import gaussian_approx  # noqa: E402
from .mcmc import ChainConfig, ChainSummary, run_chain  # noqa: E402
from .metrics import mse, psnr, ssim  # noqa: E402
from .sparse_la import SparseSymMatrix, factorize  # noqa: E402

__all__ = [
    "ChainConfig",
    "ChainSummary",
    "ContrastParams",
    "GridGraph",
    "IcarHyper",
    "InlaConfig",
    "InlaError",
    "InlaResult",
    "IoError",
    "NumericalError",
    "PixelImage",
    "SparseSymMatrix",
    "ValidationError",
    "__version__",
    "build_icar_precision",
    "corrupt_poisson",
    "factorize",
    "gaussian_approx",
    "intensity_forward",
    "intensity_inverse",
    "mse",
    "psnr",
    "read_pgm",
    "run_chain",
    "run_inla",
    "ssim",
    "write_pgm",
]
