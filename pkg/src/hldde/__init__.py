"""Numerical workbench for increasing solutions of half-linear delay equations."""
