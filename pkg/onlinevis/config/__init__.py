__package__ = 'onlinevis.config'

from .version import VERSION, PACKAGE_DIR               # noqa
from .constants import CONSTANTS                        # noqa
