"""Off-policy evaluation and hidden-archetype simulation for tool-using
health-coaching agents."""

__version__ = "0.1.0"
