"""Platoon location tracking with a base station and a reconfigurable
intelligent surface: scene synthesis, sparse Bayesian tracking, baseline
estimators, GDOP analytics, and a seeded experiment harness."""

__version__ = "0.1.0"
