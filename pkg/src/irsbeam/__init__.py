"""Joint beam training and positioning for IRS-assisted millimetre-wave links."""

from . import analysis, channel, estimator, geometry, positioning, sounding

__version__ = "0.1.0"
__all__ = ["analysis", "channel", "estimator", "geometry", "positioning", "sounding"]
