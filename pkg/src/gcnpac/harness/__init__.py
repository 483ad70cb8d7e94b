"""Configuration, orchestration, invariant suites and the command-line entry point."""
