"""Time-varying deep state-space model networks.

State-space neurons whose transition, input, and output matrices are
time-indexed expansions over a fixed basis-function dictionary with
learnable coefficients, assembled into deep networks and trained by
hand-written backpropagation through time. Ships with switching-system
data generators, a denoising task pipeline, and an experiment CLI.
"""

from .basis import (
    BasisDictionary,
    BasisFunction,
    BasisKind,
    evaluate_at,
    evaluate_grid,
    sample_dictionary,
)
from .datagen import (
    Dataset,
    FOUR_MODE_SPEC,
    SLDSSpec,
    SwitchConfig,
    build_denoise_dataset,
    build_four_mode_dataset,
    mix_at_snr,
    sample_sinusoid_input,
    slds_simulate,
    synth_clean_signal,
)
from .metrics import MetricReport, mse, si_snr_db, snr_db
from .network import (
    LayerSpec,
    NetworkParams,
    NetworkSpec,
    count_macs,
    count_parameters,
    init_network,
    match_param_budget,
    network_forward,
)
from .ssm import (
    SSMNeuron,
    TimeVaryingMatrixParam,
    materialize,
    stability_project,
    ti_forward,
    tv_forward,
)
from .training import (
    TrainConfig,
    adamw_step,
    bptt_gradients,
    fd_check,
    loss_mse,
    lr_schedule,
    train,
)

__version__ = "0.1.0"
