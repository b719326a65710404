"""
File I/O operations module.

Handles JSON configs, records and reports, and CSV scans and tables.
"""
