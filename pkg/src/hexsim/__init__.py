"""Dual-frame passively tilting fully-actuated hexacopter: model, controller, simulator."""

__version__ = "0.1.0"
