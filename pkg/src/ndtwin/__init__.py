"""Network change-validation twin: layered KG, snapshots, verification tools and agents."""

__version__ = "0.1.0"
