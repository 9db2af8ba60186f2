"""Structure-preserving simulation of the Schrödinger map flow and its Gilbert-damped perturbation."""

__version__ = "0.1.0"

from .grid import BoxGrid  # noqa: E402
from .geometry import SphereField  # noqa: E402
from .integrators import FlowParams, FlowState, advance  # noqa: E402

__all__ = ["BoxGrid", "SphereField", "FlowParams", "FlowState", "advance", "__version__"]
