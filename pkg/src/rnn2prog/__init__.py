"""Synthesize small integer programs from recurrent networks trained on input/output examples."""

__version__ = "0.1.0"
