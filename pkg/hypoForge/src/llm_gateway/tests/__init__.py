# Gateway test suite
