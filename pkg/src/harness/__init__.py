"""Experiment harness: configs, ensembles, result tables"""
