"""Giant-atom coupling-sequence design and waveguide QED simulation toolkit."""

__version__ = "0.1.0"
