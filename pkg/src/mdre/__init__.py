"""Multiclass logistic-regression density-ratio estimation with BDRE/TRE baselines."""
from mdre._accel import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
