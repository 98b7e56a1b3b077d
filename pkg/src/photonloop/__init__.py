"""Quantum-trajectory simulator for a pulsed emitter with a coherent time-delay feedback loop."""

__version__ = "0.1.0"
