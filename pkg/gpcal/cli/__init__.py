"""Command-line surface of gpcal."""
