from .sdp import Affine, SdpProblem, Solution, SolveReport, bmat, solve_sdp, trace, value
from .ellipsoid import EllipsoidState, ellipsoid_minimize

__all__ = [
    "Affine",
    "EllipsoidState",
    "SdpProblem",
    "Solution",
    "SolveReport",
    "bmat",
    "ellipsoid_minimize",
    "solve_sdp",
    "trace",
    "value",
]
