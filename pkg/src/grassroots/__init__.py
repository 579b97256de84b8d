"""Grassroots coins: NFT trade, redemption claims, dissemination among friends, analytics and simulation."""

__version__ = "0.1.0"
