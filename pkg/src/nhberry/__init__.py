"""Berry connections, monopole charge maps and complex geometric phases of a
two-level non-Hermitian model."""

__version__ = "0.1.0"
