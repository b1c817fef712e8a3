"""Runnable example models: an ecological metacommunity and a two-firm
enterprise setting. Both build ordinary layered models, so they double as
templates for new domains."""
