"""Pyramidal hybrid texture/deep feature pipeline for binary skin-image
classification: wavelet pyramid construction, LBP/LPQ texture descriptors,
deep-feature fusion, NCA-weighted column selection, a cubic-kernel SVM and
stratified evaluation schemes."""

__version__ = "0.1.0"
