"""Social task routing: pick which users across crowds to ask a question."""

__version__ = "0.1.0"
