"""
Defines the default conventions: tolerances, normalizations and budgets
shared by every module.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
import math

# Every result record echoes this dictionary, so keep it JSON-friendly.
CONVENTIONS = {
    'version': 1,

    # Geometry.
    'eps_pt': 1e-9,             # chordal distance below which points coincide
    'eps_anti': 1e-9,           # chordal distance to the antipode
    'eps_conf': 1e-4,           # minimum separation of sampled configurations
    'eps_planar': 1e-7,         # minimum separation in cross-ratio coordinates
    'metric_factor': 2.0,       # round speed per unit of chart spherical norm
    'sphere_area': 4 * math.pi,
    'measure_mass': 1.0,

    # Flows.
    'dt_fraction': 1e-3,        # default step, as a fraction of the duration
    'integration_tol': 1e-3,    # per-step error proxy of the integrator

    # Loops and braids.
    'refine_angle': math.pi / 8,
    'refine_rounds': 40,
    'max_loop_samples': 2000000,
    'max_rejections': 1000000,
    'min_crossing_angle': 1e-4,
    'min_crossing_gap': 1e-9,
    'direction_retries': 200,
    'coarea_directions': 64,

    # Invariants.
    'trefoil_signature': -2,
    'homogenize_depth': 8,
    'homogenize_tol': 1e-9,
    'signature_tol': 1e-8,

    # Forms.
    'quad_variation': 0.1,
    'quad_points': 64,
    'quad_rounds': 30,
    'short_path_bound': 3.0,

    # Estimators.
    'samples': 10000,
    'time_steps': 1000,
    'loop_periods': 8,
    'resample_budget': 1000,
    'embedding_condition': 1e6,
    'embedding_retries': 20,
}

CACHE_ENV = 'SPHEREBRAID_CACHE'
