"""UAV-served URLLC: joint RB, power and placement optimisation with GP traffic forecasts."""
__version__ = "0.1.0"
