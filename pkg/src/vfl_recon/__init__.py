"""Feature reconstruction attacks and defenses for two-party split learning."""

__version__ = "0.1.0"
