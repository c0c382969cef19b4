"""Inertial-manifold toolkit: cone-field certificates, Lyapunov synthesis,
graph-transform manifolds, exponential tracking and inertial forms."""

__version__ = "0.1.0"
