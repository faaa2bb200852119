"""This is the unit test driver module."""
