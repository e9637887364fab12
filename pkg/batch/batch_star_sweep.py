"""
This script runs a thin-neighbourhood sweep for an embedded star graph: for each ε it
meshes the ε-neighbourhood, solves both eigenvalue problems, measures the closeness of
the graph and thin-domain operators, and writes the results as CSV and NetCDF.

The sweep results and a human-readable summary are written to a named directory in the
current working directory.
"""

import os

import numpy as np
import qgtools as qg

from qgtools.manifold import check_embedding, star_embedding

# ----------------------------------------------------------------------------------- #
# EDIT THIS SECTION TO SPECIFY THE GRAPH, THE ε VALUES, AND THE MESH RESOLUTION
# ----------------------------------------------------------------------------------- #

# The name of the experiment - this will be used to name output files and directories
name = "star3_120deg"

# Star geometry: number of edges, edge length, cross-section radius, angles (radians).
# Angles of None give equally spaced edges.
n_edges = 3
length = 1.0
radius = 0.5
angles = None

# Decreasing ε values, cells across each edge strip, and eigenvalues compared
eps_values = [0.3, 0.15, 0.075]
h_rel = 6
num_eigs = 6
lambda_max = 30.0

# Index of a simple graph eigenvalue (π² for the unit star) whose eigenvector
# closeness is tracked; None to skip
simple_index = 3

# Number of ε values solved in parallel
max_workers = 1

# ----------------------------------------------------------------------------------- #
# END OF EDITABLE PARAMETER SECTION
# ----------------------------------------------------------------------------------- #

print(f"Running sweep {name}:")

outdir = f"{name}_sweep"
if not os.path.exists(outdir):
    os.mkdir(outdir)

eg = star_embedding(n_edges=n_edges, length=length, radius=radius, angles=angles)
qg.load.save_graph(eg, os.path.join(outdir, f"{name}.json"))

report = check_embedding(
    eg,
    {
        "beta0": np.pi / 2,
        "kappa0": 0.0,
        "l0": length,
        "r_minus": radius,
        "r_plus": radius,
        "dr0": 0.0,
    },
)
print(f"\nEmbedding checks passed: {report.passed} (min angle {report.min_angle:.4f})")

ds = qg.run_sweep(
    eg,
    eps_values,
    h_rel=h_rel,
    num_eigs=num_eigs,
    lambda_max=lambda_max,
    simple_index=simple_index,
    max_workers=max_workers,
)

csv_fpath = os.path.join(outdir, f"{name}_sweep.csv")
qg.write_csv(ds.qg.to_table(), csv_fpath)
ds.to_netcdf(os.path.join(outdir, f"{name}_sweep.nc"))

print("\n  eps      delta      resolvent  4 delta    lambda_2 error")
for eps in ds["eps"].values:
    row = ds.sel(eps=eps)
    print(
        f"  {eps:<8g} {float(row['delta']):<10.4g} "
        f"{float(row['resolvent_defect']):<10.4g} {float(row['bound_4delta']):<10.4g} "
        f"{float(row['eigenvalue_error'].isel(k=1)):.4g}"
    )

print(f"\ndelta decreasing: {ds.qg.is_decreasing('delta')}")
print(f"lambda_2 error decreasing: {ds.qg.is_decreasing('eigenvalue_error', k=1)}")
print(f"lambda_2 error ratios: {np.round(ds.qg.ratios('eigenvalue_error', k=1), 3)}")
print(f"\nResults written to {outdir}")
