"""
CSV, summary and binary artifacts
"""
