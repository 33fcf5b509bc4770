"""Current fluctuations and thermodynamic uncertainty ratios of quantum maser heat engines."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateKernel,
    DegenerateOperation,
    InvalidParams,
    MaserTurError,
    NumericFailure,
)
from .models import (  # noqa: E402
    EngineParams,
    LevelFrequencies,
    ModelKind,
    build_tilted_liouvillian,
    steady_state,
)
from .fcs import Cumulants, Method, cumulants  # noqa: E402
from .observables import TurReport, tur_q  # noqa: E402

__all__ = [
    "Cumulants",
    "DegenerateKernel",
    "DegenerateOperation",
    "EngineParams",
    "InvalidParams",
    "LevelFrequencies",
    "MaserTurError",
    "Method",
    "ModelKind",
    "NumericFailure",
    "TurReport",
    "build_tilted_liouvillian",
    "cumulants",
    "steady_state",
    "tur_q",
]
