"""
Chat-completion gateway for hypoForge.

- config.py: stage and domain profiles (temperatures, token cap, system messages)
- api/llm_client.py: requests, digests, the caching/retrying gateway
- api/backends.py: HTTP, scripted and record/replay backends
"""
