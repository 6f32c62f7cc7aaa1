"""Cross-validation harness, metrics and synthetic data."""
