"""Co-evolving agent topologies and capabilities under a two-timescale loop."""

__version__ = "0.1.0"
