"""Bus travel-time prediction from GPS pings: map-matching, learned predictors and evaluation."""
__version__ = "0.1.0"
