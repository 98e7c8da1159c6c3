"""Privacy-utility measures, finite-sample robustness certificates and mechanism design
for finite alphabets."""

from .bounds import (
    BoundContext,
    RobustnessCertificate,
    f_info_constant,
    certify_lipschitz,
    discrepancy_bound,
    lipschitz_constant,
    shrunk_margin,
)
from .measures import (
    FGenerator,
    MeasureSpec,
    arimoto_mi,
    channel_capacity,
    chi2_generator,
    f_information,
    hellinger_generator,
    leakage,
    max_alpha_leakage,
    parse_measure,
    pc_posterior,
    pc_prior,
    shannon_mi,
    sibson_mi,
    tv_generator,
    utility,
)
from .mechanisms import (
    DesignResult,
    FamilySpec,
    UniformDesignResult,
    lattice_privacy_utility,
    brute_force_uniform,
    constant_channel,
    design_in_family,
    dist_to_set,
    epsilon_min,
    guessing_closed_form,
    lattice_scan,
    optimal_set,
    p_sharp_q,
    randomized_response,
    uniform_design,
    worst_case_utility,
    z_channel,
)
from .preprocess import MergeMap, check_merge_monotone, merge_rare_symbols
from .prob import (
    Alphabet,
    DeviationRadius,
    JointDistribution,
    Mechanism,
    SampleSet,
    deviation_radius,
    empirical,
    l1_distance,
    marginal_s,
    marginal_x,
    new_joint,
    new_mechanism,
    push_forward,
    sample,
    sample_ball,
    weissman_tail,
)

__version__ = "0.1.0"
