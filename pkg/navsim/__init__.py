"""navsim - robust bearing-only navigation in the Earth-Moon CR3BP."""

__version__ = "0.1.0"
