"""Deep-feature exporter: runs two 1000-output CNN heads over each image's
wavelet pyramid levels and writes the PHFD interchange file."""

__version__ = "0.1.0"
