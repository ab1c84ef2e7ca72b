"""Utility functions for the ShuffleFME framework."""
