"""flexgait: evolve flexible quadruped CPG controllers and rhythm filters."""

__version__ = "0.1.0"
