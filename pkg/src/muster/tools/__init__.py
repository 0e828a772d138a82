"""Bundled toy workloads for exercising the orchestrator end to end."""
