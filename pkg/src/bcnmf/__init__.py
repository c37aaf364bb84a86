"""Bridge convex NMF: unsupervised transfer clustering by kernel alignment."""

__version__ = "0.1.0"

from .alignment import AlignmentProblem, AlphaWeights, build_qp, combine, solve_qp
from .datasets import make_rotated_pair
from .evaluation import EvalReport, accuracy, dbi, learning_curve
from .kernels import (
    FamilyGrid,
    KernelFamily,
    KernelSpec,
    base_family,
    center,
    frobenius_inner,
    gram,
    hsic_biased,
    kta,
    qmi_parzen,
)
from .nmf import FactorizationResult, NmfOptions, cnmf, cnmf_fixed_w, knmf, nmf, reconstruction_error
from .transfer import TransferConfig, TransferResult, baseline_cnmf, baseline_kernel_alone, run_bcnmf
