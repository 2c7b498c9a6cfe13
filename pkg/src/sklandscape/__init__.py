"""Local optima of the Sherrington-Kirkpatrick Hamiltonian.

Exact local-optimality probabilities, the large-deviation rate function
of sums of half-normals, and empirical descent / enumeration experiments.
"""

__version__ = "0.1.0"
