"""Centralized numeric tolerances.

Every tolerance below is a default; the functions that use one accept an
override argument. Keeping them in one place makes the verification suite's
thresholds auditable.
"""

# Iterative polyhedral projection (Dykstra cycles).
PROJECTION_RESIDUAL_TOL = 1e-10
PROJECTION_CYCLE_TOL = 1e-12
PROJECTION_MAX_ITER = 10_000

# Construction-time validation.
UNIT_VECTOR_TOL = 1e-12
INTERIOR_MARGIN_FLOOR = 1e-8

# Inward normals are undefined closer to the domain than this.
NORMAL_MIN_DIST = 1e-12

# Skorokhod-contract verification.
BOUNDARY_TOL = 1e-9
FLATNESS_TOL = 1e-12

# Membership test used when validating starting points.
MEMBERSHIP_TOL = 1e-12

# Relative slack applied to declared coefficient constants.
COEFFICIENT_SLACK = 1e-9
