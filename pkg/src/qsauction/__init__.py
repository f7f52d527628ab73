"""Simulator for a multiparty quantum sealed-bid auction with single-photon bid carriers."""

__version__ = "0.1.0"
