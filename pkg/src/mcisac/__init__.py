"""Rate / Cramer-Rao bound tradeoff for multicast integrated sensing and communication."""
from .beamforming import (
    BeamformingDesign,
    ScaTrace,
    init_sdr_multicast,
    joint_beamforming,
    sca_no_cancellation,
    sca_p3,
    sca_p4,
)
from .covariance import (
    BeampatternSpec,
    TradeoffPoint,
    isotropic,
    solve_beampattern,
    solve_capacity,
    solve_p1,
    solve_p1_sdp,
    solve_p2,
    solve_sensing_only,
)
from .estimation import EstimationRun, caml_estimate, ls_estimate, monte_carlo, simulate_echo, synthesize_block
from .metrics import (
    FisherInformation,
    crb,
    crb_scenario1,
    crb_scenario2,
    fisher_information,
    multicast_rate,
)
from .model import (
    ArrayManifold,
    ChannelSet,
    RandomSource,
    Rayleigh,
    Rician,
    SystemConfig,
    TargetSet,
    generate_channels,
    load_config,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayManifold",
    "BeamformingDesign",
    "BeampatternSpec",
    "ChannelSet",
    "EstimationRun",
    "FisherInformation",
    "RandomSource",
    "Rayleigh",
    "Rician",
    "ScaTrace",
    "SystemConfig",
    "TargetSet",
    "TradeoffPoint",
    "caml_estimate",
    "crb",
    "crb_scenario1",
    "crb_scenario2",
    "fisher_information",
    "generate_channels",
    "init_sdr_multicast",
    "isotropic",
    "joint_beamforming",
    "load_config",
    "ls_estimate",
    "monte_carlo",
    "multicast_rate",
    "sca_no_cancellation",
    "sca_p3",
    "sca_p4",
    "simulate_echo",
    "solve_beampattern",
    "solve_capacity",
    "solve_p1",
    "solve_p1_sdp",
    "solve_p2",
    "solve_sensing_only",
    "synthesize_block",
]
