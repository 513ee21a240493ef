"""Higher-order Integrated Gradients attributions built by composing attribution operators."""

__version__ = "0.1.0"
