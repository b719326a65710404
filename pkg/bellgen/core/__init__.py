"""
Core module for bellgen.

Contains the state model, acquisition simulator, reconstruction and the
command runner.
"""
