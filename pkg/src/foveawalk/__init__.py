"""Foveated-rendering redirected walking: compositing reference, controller and simulator."""

__version__ = "0.1.0"
