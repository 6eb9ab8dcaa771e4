"""ANFJ: concrete interpreter and pushdown exception-flow analyzer."""

__version__ = "0.1.0"
