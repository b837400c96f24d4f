"""
==================
spherebraid
==================
"""
from .conventions import Conventions
from .sphere import ProjPoint, TangentVector, Mobius
from .flows import RadialProfile, FlowSpec
from .configuration import Configuration, Loop
from .braid import BraidWord, CrossingEvent, PlanarLoop
from .invariants import SeifertMatrix, QuasimorphismValue
from .forms import FormIndex
from .quasimorphism import QMEstimate, EmbeddingSpec

__all__ = ['Conventions',
           'ProjPoint',
           'TangentVector',
           'Mobius',
           'RadialProfile',
           'FlowSpec',
           'Configuration',
           'Loop',
           'BraidWord',
           'CrossingEvent',
           'PlanarLoop',
           'SeifertMatrix',
           'QuasimorphismValue',
           'FormIndex',
           'QMEstimate',
           'EmbeddingSpec',
           ]


__version__ = None

try:
    from ._version import __version__
except ImportError:
    pass

__version__ = __version__ or "unknown"
