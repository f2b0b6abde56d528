"""File I/O tools for datasets and reports."""
