"""Experiment configs, presets, runner, diagnostics and CLI."""
