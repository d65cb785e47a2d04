"""raincast: a reproducible rainfall-forecast evaluation harness.

Builds expert LSTM forecasts from station data, a 30-year climatology
baseline, prompt-driven LLM forecasts (live, replayed, or mocked), an
uncertainty-gated fusion of expert and fallback, and a metric report
over all of them.
"""

__version__ = "0.1.0"

from .errors import ConfigError, RaincastError

__all__ = ["ConfigError", "RaincastError", "__version__"]
