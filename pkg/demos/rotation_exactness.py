"""A linear rotation embedded at several truncations.

Linear systems keep total occupation fixed, so even the smallest truncation
that holds the observable reproduces the classical curve to solver precision.
"""

import math

from kvnsim import FockBasis, Interaction, ObservableSpec, OdeSystem, build_hamiltonian, compare, norm_certificate

rot = OdeSystem(2, (Interaction.from_dict({0: 1.0, 1: -1.0}),))
x1 = ObservableSpec(1, (({0: 1}, 1.0),))

for m in (1, 2, 3, 6):
    H = build_hamiltonian(rot, FockBasis(2, m))
    cert = norm_certificate(H, rot)
    table = compare(rot, [0.6, 0.3], x1, m, 2 * math.pi, 64)
    print(f"m={m}: dim={H.dim:3d} nnz={H.nnz:3d} certificate={'ok' if cert.passed else 'FAILED'}  max error={table.max_error:.2e}")
