"""Action-potential propagation through gap-junction-coupled excitable cells."""

__version__ = "0.1.0"
