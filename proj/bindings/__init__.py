from ._evbal import *  # noqa: F401,F403
from ._evbal import __doc__  # noqa: F401
