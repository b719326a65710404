#!/usr/bin/env python3
"""
Legacy entry point for tools that still call ``setup.py`` directly.

All metadata, dependencies and the ``bellgen`` console script live in
pyproject.toml.
"""

from setuptools import setup

setup()
