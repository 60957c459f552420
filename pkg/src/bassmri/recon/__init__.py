"""Forward model, proximal maps and reconstruction oracles."""

from .encoding import (
    CoilSensitivities,
    adjoint_E,
    coil_combine,
    combine_weights,
    encode,
    encode_adjoint,
    fft2c,
    forward_E,
    ifft2c,
)
from .fista import FistaResult, ReconDivergenceError, fista_ls
from .prox import (
    finite_differences,
    finite_differences_adjoint,
    nuclear_norm,
    prox_nuclear,
    prox_sfd,
    sfd_norm,
    soft_threshold,
    svt,
    tv_prox,
)
from .reconstructors import (
    METHODS,
    DictionaryReconstructor,
    LowRankReconstructor,
    ReconConfig,
    ReconResult,
    Reconstructor,
    SFDReconstructor,
    ZeroFillReconstructor,
    exponential_dictionary,
    make_reconstructor,
    recon_cs,
    recon_dic,
    recon_zero_fill,
)
