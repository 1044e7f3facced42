"""gridwatch: DC state estimation, stealthy combined attacks, and LSTM-RDAE detection."""

from ._core import (  # noqa: F401
    AeModel,
    GridCase,
    ObservationMatrix,
    attack_neighborhood,
    bdd_detect,
    build_observation_matrix,
    bus_degree,
    calibrate_tau1,
    calibrate_thresholds,
    check_stealth,
    contaminated_rows,
    corrupt,
    critical_rows,
    generate_dataset,
    gradient_check,
    is_critical,
    load_case,
    load_model,
    make_model,
    mar_mask,
    mcar_mask,
    observable_after_mask,
    parse_case,
    save_model,
    synth_fdia,
    train_model,
    wls_estimate,
)

__version__ = "0.1.0"
