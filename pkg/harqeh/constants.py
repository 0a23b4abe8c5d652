"""Global constants for the harq-eh toolkit."""

# Value iteration: k values are O(10-100), so these keep real ties apart
# from convergence noise by several orders of magnitude.
DEFAULT_TOL = 1e-12
DEFAULT_TIE_TOL = 1e-9
DEFAULT_MAX_ITER = 1_000_000

# Smallest discount step that float64 can represent below 1.
MIN_DISCOUNT_GAP = 2.0 ** -52

# Accumulated information within this many bits of r1 counts as complete.
INFO_TOL = 1e-9

# Max row residual accepted from the absorbing-chain linear solve.
ABSORPTION_RESIDUAL_TOL = 1e-10

# Monte Carlo
DEFAULT_EPISODES = 100_000
FULL_EPISODES = 10_000_000
DEFAULT_SEED = 20170101
SLOT_CAP = 10_000_000
BLOCK_SIZE = 4096
Z_95 = 1.96

ENV_OUTPUT_DIR = "HARQEH_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"
