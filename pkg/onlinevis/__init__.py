#!/usr/bin/env python3

# onlinevis: online video instance segmentation at desk scale.
#
# Frames are processed strictly in order. Instance queries, reference points and
# class scores are carried from frame to frame, and a small FIFO memory of past
# instances is attended to by the decoder.

__package__ = 'onlinevis'

from pathlib import Path

PACKAGE_DIR = Path(__file__).resolve().parent

from .config.version import VERSION             # noqa

__version__ = VERSION
__license__ = 'MIT'
