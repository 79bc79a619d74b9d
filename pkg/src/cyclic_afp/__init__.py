"""Approximate fixed points of cyclical maps on G-metric spaces.

Describe a problem in a small spec file (sets, map, G-metric, tolerances),
then check the G-metric axioms, measure how strongly the map contracts,
iterate towards epsilon-fixed points and compare the measured size of the
epsilon-fixed-point set with its closed-form bound.
"""

from .atlas import *  # noqa: F401,F403
from .cyclic import *  # noqa: F401,F403
from .engine import *  # noqa: F401,F403
from .errors import *  # noqa: F401,F403
from .expr import *  # noqa: F401,F403
from .report import *  # noqa: F401,F403
from .space import *  # noqa: F401,F403
from .speclang import *  # noqa: F401,F403

__version__ = "0.1.0"
