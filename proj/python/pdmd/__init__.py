from ._pdmd import *  # noqa: F401,F403
from ._pdmd import __doc__  # noqa: F401
