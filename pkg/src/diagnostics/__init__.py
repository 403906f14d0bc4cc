"""Ensemble diagnostics over stored run records"""
