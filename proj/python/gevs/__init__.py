from ._gevs import *  # noqa: F401,F403
from ._gevs import __doc__, __version__  # noqa: F401
