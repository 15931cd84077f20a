"""Inverse rendering of shiny reference objects.

Recovers HDR environment lighting and 6D pose + scale of a known glossy
object from a single HDR photograph, and reconstructs the object's
spatially-varying metallic material from posed multi-view captures under
known lighting.  Ships a deterministic differentiable renderer with a
compiled kernel core and a pure-numpy fallback.
"""

__version__ = "0.1.0"
