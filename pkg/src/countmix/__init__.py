"""Count time series with explosive covariates: simulation, coupling-based mixing estimates and least-squares inference."""

__version__ = "0.1.0"
