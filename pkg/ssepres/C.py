"""
Column names of the output tables, parameter keys, experiment kinds and
numeric defaults shared across ssepres.
"""

# column names of the tables written by the harness
TIME = "t"
U = "u"
VALUE = "value"
MASS = "mass"
N = "N"
SEED = "seed"
EPS = "eps"
TOLERANCE = "tolerance"
PASSED = "passed"
METRIC = "metric"
CALIBRATED = "calibrated"
CLIPPED = "clipped"
J_VALUE = "j_value"
K_VALUE = "k_value"
STATE = "state"
PROBABILITY = "probability"
SITE = "site"

# parameter keys of configuration files
PARAM_K = "K"
PARAM_THETA = "theta"
PARAM_ALPHA = "alpha"
PARAM_BETA = "beta"
PARAM_GAMMA = "gamma"
PARAM_DELTA = "delta"
PARAM_KEYS = (PARAM_K, PARAM_THETA, PARAM_ALPHA, PARAM_BETA, PARAM_GAMMA,
              PARAM_DELTA)

# time scales of run_until
DIFFUSIVE = "diffusive"
SUBDIFFUSIVE = "subdiffusive"

# boundary condition kinds
NONLINEAR_ROBIN = "nonlinear_robin"
NEUMANN = "neumann"

# experiment kinds
HYDRODYNAMIC = "hydrodynamic"
FICKS_LAW = "ficks_law"
HYDROSTATIC_ROBIN = "hydrostatic_robin"
HYDROSTATIC_NEUMANN_MASS = "hydrostatic_neumann_mass"
ORACLE_CERTIFY = "oracle_certify"
OPERATOR_CHECKS = "operator_checks"
EXPERIMENT_KINDS = (HYDRODYNAMIC, FICKS_LAW, HYDROSTATIC_ROBIN,
                    HYDROSTATIC_NEUMANN_MASS, ORACLE_CERTIFY, OPERATOR_CHECKS)

# defaults
DEFAULT_EPS = 0.05
DEFAULT_CELLS = 32
DEFAULT_RK4_DT = 1e-3
DEFAULT_IMAGE_COUNT = 8
DEFAULT_T_FLOOR = 1e-12
DOMAIN_SLACK = 1e-9
MAX_ORACLE_SITES = 14
GENERATOR_NAME = "numpy.PCG64"
UNIFORM_BLOCK = 1 << 16
