"""Energy and momentum series from Level 3 order flow, with microstructure
baselines and an evaluation harness."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, LobPhysError  # noqa: E402
from .lob_core import Book, OrderEvent, apply_event, sample_frames  # noqa: E402
from .physics import active_depth, physics_series  # noqa: E402

__all__ = ["__version__", "Book", "OrderEvent", "apply_event", "sample_frames", "active_depth",
           "physics_series", "LobPhysError", "DataError", "ConfigError"]
