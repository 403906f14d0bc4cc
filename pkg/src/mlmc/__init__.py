"""Multilevel Monte Carlo estimator, calibration and the two controllers"""
