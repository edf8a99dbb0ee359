"""charflow: a laboratory for hyperbolic systems with totally characteristic boundary.

Solves the interior Cauchy problem on the half-space (no boundary
conditions at x = 0), computes the conormal boundary traces by solving
the explicit cascade of hyperbolic systems on the boundary, and
cross-verifies the two against each other and against the symbol-calculus
identities (composition, adjoint, compatibility, energy inequality).
"""

__version__ = "0.1.0"
