"""Blocked, gated, and distributed causal convolution toolkit."""

from .blockconv import (
    MultiplyCounter,
    ToeplitzFactors,
    TwoStageIneligibleError,
    assemble_toeplitz,
    block_conv,
    build_factors,
    chunk_parallel_forward,
    spill_count,
    two_stage_backward,
    two_stage_flops,
    two_stage_forward,
    two_stage_forward_saved,
)
from .core import (
    ExplicitFilter,
    GroupSpec,
    ImplicitFilter,
    RegularizedFilter,
    SeqTensor,
    causal_conv_input_grad,
    causal_conv_taps_grad,
    direct_causal_conv,
    filter_length,
    full_toeplitz,
    materialize_filter,
    uniform_groups,
)
from .cpsim import (
    ShardedSeq,
    SimGroup,
    a2a_conv,
    a2a_conv_backward,
    a2a_conv_pipelined,
    a2a_conv_saved,
    gather,
    p2p_conv,
    p2p_conv_overlapped,
    p2p_fft_causal_wrapper,
    p2p_fft_conv,
    p2p_fft_forward,
    p2p_fft_inverse,
    shard,
)
# the transform functions live on the submodule (convhybrid.fft.fft etc.);
# re-exporting the one named `fft` here would shadow that submodule
from . import fft
from .fft import (
    bit_reversal,
    circular_conv_oracle,
    dft_oracle,
    dif_split,
    dit_merge,
    fft_conv,
    idft_oracle,
    next_pow2,
)
from .hyena import (
    HyenaConfig,
    HyenaGrads,
    LayoutSpec,
    OperatorStack,
    build_layout,
    hyena_backward,
    hyena_forward,
    hyena_forward_saved,
    identity_config,
    iter_params,
    layout_backward,
    layout_forward,
    layout_forward_saved,
    make_hyena_config,
    make_inner_bank,
    make_layout,
    update_param,
)
from .rand import make_rng
from .smoketrain import TrainResult, smoke_train
from .verify import CheckResult, VerifySettings, run_verify

__version__ = "0.1.0"
