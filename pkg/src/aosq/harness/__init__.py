"""Synthetic scenarios, experiment drivers, report tables and the ``aosq`` CLI."""
