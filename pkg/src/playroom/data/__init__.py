"""Bundled data files: the desk catalog and the lesson registry."""
