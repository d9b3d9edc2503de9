"""dropsr: dropout placement in super-resolution networks, at desk scale."""

__version__ = "0.1.0"
