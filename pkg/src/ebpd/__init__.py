"""Experience-based planning domains: learn activity schemata with scopes of
applicability and plan with them."""

__version__ = "0.1.0"
