"""CAN payload reverse-engineering toolkit.

Infers signal boundaries and labels from raw CAN traffic plus OBD-II
diagnostic responses, emits DBC-compatible signal maps, and scores them
against ground truth.
"""

__version__ = "0.1.0"
