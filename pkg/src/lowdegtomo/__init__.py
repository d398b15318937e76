"""Randomized Pauli tomography of low-degree noise channels in gate layers."""

__version__ = "0.1.0"

from .pauli import (
    PauliString,
    StateLabel,
    StateString,
    LowDegreeIndex,
    low_degree_index,
    overlap,
    pauli_mul,
)
from .frames import (
    FrameTable,
    build_f,
    build_g_shadow,
    dual_frame_expansion,
    g_min_closed_form,
    left_kernel,
    load_frame,
    minimize_frame,
    rotated_frame,
    save_frame,
    variance_constant,
)
from .channels import (
    ChannelModel,
    GateLayer,
    ProcessMatrix,
    bitflip_product,
    bitflip_tail_bound,
    chi_from_kraus,
    correlated_xflip_channel,
    decaying_dephasing_channel,
    spurious_coupling_bound,
    truncate_chi,
)
from .sampling import SnapshotSampler, exact_distribution, worker_rng
from .estimation import (
    EstimatorAccumulator,
    FrameAssignment,
    analytic_variance,
    analytic_variance_exact,
    convergence_samples,
    estimate_entries,
    eval_G,
    mom_plan,
    plain_frames,
    rotated_frames,
)
