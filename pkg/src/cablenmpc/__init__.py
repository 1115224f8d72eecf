"""Cable-suspended payload manipulation with a team of quadrotors."""
__version__ = "0.1.0"
