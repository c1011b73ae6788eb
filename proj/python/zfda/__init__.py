"""Zero-forget domain adaptation of autoencoders via sparse additive modifications."""

from zfda._core import *  # noqa: F401,F403
from zfda._core import __version__  # noqa: F401
