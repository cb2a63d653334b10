"""Single-image human pose forecasting with a recurrent hourglass and a 3D skeleton converter."""

__version__ = "0.1.0"
