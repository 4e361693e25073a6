"""Experiment harness: seeded streams, statistics, configs and the CLI."""
