"""contrastkit: contrastive dimension reduction for foreground/background data."""

from .core import EigenPairs, Embedding, principal_angles, max_principal_angle
from .exceptions import (
    ConfigError,
    ContrastkitError,
    DegenerateData,
    DegenerateResponse,
    DegenerateSpectrum,
    InsufficientData,
    InsufficientFeatures,
    InvalidArgument,
    InvalidData,
    InvalidGamma,
    NoValidBackground,
    NumericalFailure,
    ParseError,
    RankDeficient,
    SingularMatrix,
    UnsupportedGrid,
    UnsupportedSize,
)
from .linear import (
    CCUR,
    CPCA,
    GCPCA,
    ccur_select,
    cpca_fit,
    cpca_gamma_sweep,
    cpca_transform,
    gcpca_fit,
    gcpca_objective,
)
from .model import CLVM, PCPCA, clvm_fit_em, clvm_transform, pcpca_contrastive_loglik, pcpca_fit
from .preprocess import (
    BackgroundTestReport,
    CdeReport,
    bascod_test,
    cde_estimate_dim,
    cde_test,
    estimate_subspace,
)
from .structured import (
    CFPCA,
    CIR,
    CLR,
    CurveSet,
    cfpca_fit,
    cir_fit,
    clr_fit,
    clr_predict,
    sir_fit,
    sir_slice_moments,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
