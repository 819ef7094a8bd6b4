"""Shadow-overlap certification of quantum states from single-qubit measurements.

Subpackages:
    bits        bit-string arithmetic, hypercube neighborhoods, seeded randomness
    models      amplitude oracles for the supported target-state families
    states      dense statevector engine: noise, partial Z measurement, shadows
    protocol    data collection, local overlaps, certification verdicts
    chains      hypercube walk construction, spectra, escape checks, congestion
    estimators  fidelity, XEB, normalized overlap, sparse observables, purity
    circuit_opt greedy circuit-synthesis optimization against IQP+T targets
    nqs         dual-input neural network learning phases from measurement data
    cli         command-line driver
"""

__version__ = "0.1.0"
