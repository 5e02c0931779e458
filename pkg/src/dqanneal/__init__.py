"""Two-qubit digitized quantum annealing: schedule, Trotter compilation to
NMR pulses, noisy density-matrix simulation and a classical Bloch baseline."""

__version__ = "0.1.0"
