"""
Utility modules for bellgen.

Seed splitting and stage timing.
"""
