"""Radiative shock profiles, Evans function stability checks and nonlinear decay runs."""

from .model import ModelSpec, preset, check_assumptions
from .profile import build_profile, Profile

__all__ = ["ModelSpec", "preset", "check_assumptions", "build_profile", "Profile"]
__version__ = "0.1.0"
