"""Command-line front end: argument parsing, dispatch, report emission."""
