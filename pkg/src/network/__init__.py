"""Layer graph; the assembled network lives in network.msfnet."""

from .graph import LayerGraph, Node

__all__ = ["LayerGraph", "Node"]
