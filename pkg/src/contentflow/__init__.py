"""ContentFlow: content-to-flow mapping over an SDN-style switch fabric,
with transparent proxying and one-sided caching, inside a deterministic
network simulator."""

__version__ = "0.1.0"
