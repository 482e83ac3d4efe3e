"""Group-aware pedestrian trajectory prediction (SG-LSTM and baselines) and a
velocity-obstacle navigation simulator that consumes its forecasts."""

__version__ = "0.1.0"
