"""Room-temperature forecasting with gradient-boosted trees, plus global,
local, and frequency-domain model explanations."""

__version__ = "0.1.0"
