"""
Parsing, graph and metric utilities for materials charts.
"""
