"""Autoregressive energy machines in numpy."""
