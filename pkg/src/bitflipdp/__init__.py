"""Channel-native differential privacy for federated model uploads.

Models are quantized onto a shared-exponent fixed-point grid whose 23
fraction bits are protected by random bit flips; the flip probability that
a noisy wireless channel already provides is credited against the privacy
budget, so only the shortfall is added artificially.  The package bundles
the float/fixed codec, the flip mechanism and channel model, a Rényi
privacy accountant, closed-form bias/variance and convergence analyses,
scikit-learn style mechanism estimators, a federated simulator, and a CLI.
"""

from .accountant import (
    KappaEstimate,
    PrivacyBudget,
    bit_distance,
    classical_sensitivity,
    estimate_kappa_bar,
    fraction_distance,
    gaussian_sigma,
    renyi_to_dp_delta,
    required_ber,
)
from .analysis import (
    AtomDistribution,
    ConvergenceParams,
    FlipStats,
    atom_distributions,
    bias_moments,
    convergence_bound,
    flip_value_samples,
    flipped_mean,
    flipped_variance,
    moment_inequality_sides,
    noiseless_bound,
    per_bit_bound,
    renyi_divergence_oracle,
    x_bf_bound,
    x_gauss_bound,
)
from .binfloat import (
    Binary32Parts,
    FixedPointVector,
    decompose,
    encode,
    fixed_point_range,
    fp_to_fx,
    fraction_fields,
    fractions_from_bits,
    grid_step,
    pack_bitstream,
    recompose,
    recover_from_fractions,
    recover_model,
    unpack_bitstream,
)
from .flsim import (
    ArmResult,
    ArmSpec,
    ClientState,
    ExperimentConfig,
    ExperimentResult,
    Mechanism,
    PretrainRecord,
    RoundRecord,
    Task,
    TaskSpec,
    UploadResult,
    client_kappas,
    make_task,
    pretrain,
    run_arm,
    run_experiment,
    upload,
)
from .mechanisms import BitFlipMechanism, GaussianMechanism
from .perturb import (
    ChannelConfig,
    ChannelNoiseExceedsBudget,
    RngHandle,
    artificial_ber,
    awgn_ber,
    ciphertext_ber_block,
    compose_ber,
    flip_bits,
    flip_fractions,
    flip_float32_words,
    perturb_model,
    plaintext_ber_block,
    plaintext_ber_stream,
)
from .verify import CheckResult, run_suite

__version__ = "0.1.0"

__all__ = [
    "ArmResult",
    "ArmSpec",
    "AtomDistribution",
    "Binary32Parts",
    "BitFlipMechanism",
    "ChannelConfig",
    "ChannelNoiseExceedsBudget",
    "CheckResult",
    "ClientState",
    "ConvergenceParams",
    "ExperimentConfig",
    "ExperimentResult",
    "FixedPointVector",
    "FlipStats",
    "GaussianMechanism",
    "KappaEstimate",
    "Mechanism",
    "PretrainRecord",
    "PrivacyBudget",
    "RngHandle",
    "RoundRecord",
    "Task",
    "TaskSpec",
    "UploadResult",
    "artificial_ber",
    "atom_distributions",
    "awgn_ber",
    "bias_moments",
    "bit_distance",
    "ciphertext_ber_block",
    "classical_sensitivity",
    "client_kappas",
    "compose_ber",
    "convergence_bound",
    "decompose",
    "encode",
    "estimate_kappa_bar",
    "fixed_point_range",
    "flip_bits",
    "flip_fractions",
    "flip_float32_words",
    "flip_value_samples",
    "flipped_mean",
    "flipped_variance",
    "fp_to_fx",
    "fraction_distance",
    "fraction_fields",
    "fractions_from_bits",
    "gaussian_sigma",
    "grid_step",
    "make_task",
    "moment_inequality_sides",
    "noiseless_bound",
    "pack_bitstream",
    "per_bit_bound",
    "perturb_model",
    "plaintext_ber_block",
    "plaintext_ber_stream",
    "pretrain",
    "recompose",
    "recover_from_fractions",
    "recover_model",
    "renyi_divergence_oracle",
    "renyi_to_dp_delta",
    "required_ber",
    "run_arm",
    "run_experiment",
    "run_suite",
    "unpack_bitstream",
    "upload",
    "x_bf_bound",
    "x_gauss_bound",
]
