"""Few-boson simulations of cat-state preparation in movable optical microtraps."""

__version__ = "0.1.0"
