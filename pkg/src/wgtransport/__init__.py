"""Two-photon transport through emitter chains coupled to a waveguide."""
from .params import DerivedConstants, SystemParams

__all__ = ["SystemParams", "DerivedConstants"]
__version__ = "0.1.0"
