"""Desk-scale PHAM trial engine: grip decoding, synthetic subjects, session
state machine, kinematic assessment, and a live session server.
"""

__version__ = "0.1.0"
