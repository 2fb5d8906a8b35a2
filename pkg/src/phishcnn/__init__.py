"""Phishing web-page classification from raw HTML.

Character- and word-level token streams are embedded, concatenated along the
sequence axis, and classified by a small 1D-convolutional network whose
forward and backward passes (and Adam optimizer) are written by hand on top
of plain numpy arrays.
"""

__version__ = "0.1.0"
