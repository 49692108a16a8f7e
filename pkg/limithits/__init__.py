"""Limit Hits - price-limit hit analytics for tick data with order-book snapshots."""

__version__ = "0.1.0"
