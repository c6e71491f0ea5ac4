"""Decision-estimation coefficients and locally-private learners on finite
problem instances, with machine-checkable certificates for every bound."""

from .prob import (
    SIGN_SPACE,
    FiniteDist,
    FiniteSpace,
    LDictionary,
    ScalarFn,
    chi_sq,
    hellinger_sq,
    huber_hellinger,
    kl,
    l_divergence,
    mix,
    rad,
    tv,
)
from .channels import (
    Channel,
    SdpiDecomposition,
    apply_channel,
    binary_channel,
    dp_level,
    random_dp_channel,
    sdpi_check,
    sdpi_decompose,
)
from .models import (
    LossSpec,
    Model,
    ModelClass,
    QueryModelClass,
    RewardFn,
    canonical_mab,
    contextual_bandit_class,
    default_dictionary,
    hypothesis_selection,
    linear_model_class,
    mab_class,
    parity_class,
    regression_class,
)
from .dec import (
    CorrelationReport,
    DecCertificate,
    FixedPointResult,
    RandomizedQueryModel,
    SearchConfig,
    constrained_pac_dec_ldp,
    fractional_covering,
    gaussian_halfspace_dictionary,
    local_dec,
    min_correlation,
    offset_dec_hellinger,
    offset_pac_dec_ldp,
    offset_regret_dec_ldp,
    quantile_loss,
    quantile_pac_dec,
    robust_offset_dec,
    solve_fixed_point_U,
    sq_dec,
    tv_modulus,
)
from .estimators import (
    EstRecord,
    OnlineMirrorDescent,
    VovkAggregator,
    omd_bound,
    omd_step,
    record_est,
    vovk_bound,
    vovk_step,
)
from .learners import (
    BruteForceDC,
    ExoPlus,
    InfoSetStructure,
    LdpE2D,
    LearnerConfig,
    SqE2D,
    Transcript,
    hybrid_structure,
    model_based_structure,
    policy_based_structure,
    value_based_structure,
)
from .environments import (
    AdversarialContextEnv,
    AuditReport,
    GqOracleEnv,
    HuberEnv,
    RunReport,
    StationaryEnv,
    privacy_audit,
    run,
)

__version__ = "0.1.0"
