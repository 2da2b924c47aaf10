# numerical tolerances used across the package
ORTHO_TOL = 1e-10
RANK_TOL = 1e-10
EIG_ZERO = 1e-12
COND_MAX = 1e12
DENOM_MIN = 1e-10
