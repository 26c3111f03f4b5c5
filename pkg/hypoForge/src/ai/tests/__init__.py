"""Stage, pipeline and end-to-end tests."""
