"""TDC-less direct time-of-flight depth estimation with a spiking LMU network."""

__version__ = "0.1.0"
