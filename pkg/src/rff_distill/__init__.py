"""RF fingerprint identification with temperature-controlled knowledge distillation."""

__version__ = "0.1.0"
