"""csipose: synthetic WiFi CSI sensing and 3D human pose regression."""

__version__ = "0.1.0"
