"""
Materials chart model for hypoForge.

- state/: system charts, hypotheses, evaluations and ideas
- utils/: reply table parsing, chart graphs and audit metrics
- tests/: unit and property tests
"""
