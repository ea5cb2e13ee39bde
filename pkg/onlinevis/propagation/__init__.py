__package__ = 'onlinevis.propagation'

from .state import InstanceState, PropagationConfig      # noqa
from .prior import PriorPropagation                     # noqa
