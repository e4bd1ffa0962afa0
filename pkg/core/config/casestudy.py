"""
Config document of the three-room case study: three identical nonlinear
subsystems of dimension ``block_size`` on a complete consensus graph, each
abstracted by a scalar system, steered through a reach-avoid task.
"""

SUBSYSTEMS = 3
TAU_GAIN = 0.9
# Consensus step of the 222-node instance, shared by reduced instances.
TAU = TAU_GAIN / 221
NOISE = 0.007
INITIAL_STATE = -13.0
SATURATION = 4.0
HORIZON = 10
TRIALS = 10_000
SEED = 2019

FORMULA = 'G[10](s & !o1 & !o2 & !o3) & F t1 & F t2'

REGIONS = {
    's': [[[-14, 14], [-14, 14], [-14, 14]]],
    'o1': [[[-10, -6], [6, 10], [10, 10]]],
    'o2': [[[-5, 5], [-5, 5], [-5, 5]]],
    'o3': [[[6, 10], [-10, -6], [10, 10]]],
    't1': [[[-10, -6], [-10, -6], [-10, -6]]],
    't2': [[[6, 10], [6, 10], [6, 10]]],
}

WAYPOINTS = [
    [-8.0, -8.0, -8.0],
    [8.0, -8.0, -8.0],
    [8.0, 8.0, -8.0],
    [8.0, 8.0, 8.0],
]


def _identity(n):
    return {'generator': 'identity', 'n': n}


def _ones(n, scale=1.0):
    column = {'generator': 'ones', 'rows': n, 'cols': 1}
    return column if scale == 1.0 else {'generator': 'scaled', 'factor': scale, 'of': column}


def _zeros(rows, cols):
    return {'generator': 'zeros', 'rows': rows, 'cols': cols}


def _subsystem(index: int, n: int, zero_noise: bool) -> dict:
    concrete = {
        'A': _identity(n),
        'B': _identity(n),
        'C1': {'generator': 'unit_row', 'size': n, 'index': 0},
        'C2': _identity(n),
        'D': _identity(n),
        'E': _ones(n),
        'F': {'generator': 'unit_row', 'size': n, 'index': 0},
        'R': _zeros(n, 1) if zero_noise else _ones(n, NOISE),
        'phi': {'kind': 'sine', 'slope_bound': 1.0, 'shift': 0.0},
    }
    abstract = {
        'A': [[0.5]],
        'B': [[1.0]],
        'C1': [[1.0]],
        'C2': [[1.0]],
        'D': [[1.0]],
        'E': [[0.1]],
        'F': [[1.0]],
        'R': [[0.0]],
        'phi': {'kind': 'sine', 'slope_bound': 1.0, 'shift': 0.0},
    }
    certificate = {
        'Mtil': _identity(n),
        'K': {'generator': 'scaled', 'factor': -0.5, 'of': _identity(n)},
        'Q': _ones(n, -0.5),
        'L1': _ones(n, -1.0),
        'L2': _ones(n, -0.1),
        'Z': _identity(n),
        'G': _identity(n),
        'Ghat': _ones(n),
        'H': _ones(n),
        'P': _ones(n),
        'Rtil': _ones(n),
        'Xbar11': _identity(n),
        'Xbar12': {'generator': 'scaled', 'factor': 0.5, 'of': _identity(n)},
        'Xbar21': {'generator': 'scaled', 'factor': 0.5, 'of': _identity(n)},
        'Xbar22': _zeros(n, n),
        'kappa_hat': 0.95,
        'k_til': 1.0,
    }
    return {'name': f"room{index + 1}", 'concrete': concrete, 'abstract': abstract, 'certificate': certificate}


def casestudy_config(block_size: int = 74, zero_noise: bool = False, trials: int = TRIALS,
                     seed: int = SEED) -> dict:
    """
    Config document (generators, not literals) of the case study.

    Args:
        block_size: state dimension of each concrete subsystem; 74 gives the
            full 222-dimensional network, 3 the reduced smoke-test variant
        zero_noise: drop the concrete noise, so paired runs coincide exactly
    """
    if block_size < 1:
        raise ValueError(f"Block size must be positive, got {block_size}")
    total = SUBSYSTEMS * block_size
    return {
        'name': 'casestudy' if block_size == 74 else f"casestudy-n{block_size}",
        'subsystems': [_subsystem(i, block_size, zero_noise) for i in range(SUBSYSTEMS)],
        'mu': [1.0] * SUBSYSTEMS,
        'coupling': {'generator': 'consensus', 'graph': 'complete', 'n': total, 'tau': TAU},
        'spec': {
            'formula': FORMULA,
            'props': REGIONS,
            'epsilon': 1.0,
            'horizon': HORIZON,
        },
        'policy': {
            'kind': 'waypoint',
            'saturation': SATURATION,
            'waypoints': WAYPOINTS,
            'tolerance': 0.5,
        },
        'initial': {
            'x0': {'fill': INITIAL_STATE, 'size': total},
            'xhat0': {'fill': INITIAL_STATE, 'size': SUBSYSTEMS},
        },
        'bound': {
            'epsilons': [0.04, 0.1, 0.5, 1.0],
            'horizons': [HORIZON],
            'nuhat_sup': SATURATION,
        },
        'mc': {
            'trials': trials,
            'seed': seed,
            'epsilons': [0.04, 0.1, 0.5, 1.0],
        },
    }
