#!/usr/bin/env python3
"""This is the main entry point for the onlinevis CLI."""
__package__ = 'onlinevis'

import sys

from .cli import main


if __name__ == '__main__':
    main(args=sys.argv[1:], stdin=sys.stdin)
