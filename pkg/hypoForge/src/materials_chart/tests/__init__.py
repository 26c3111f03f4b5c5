"""
Materials chart tests.

Pure, offline tests of the chart model, the table parser, graph building
and the audit metrics. Use pytest to run tests from this directory.
"""
