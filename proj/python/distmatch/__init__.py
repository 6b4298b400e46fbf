"""Python bindings for the distmatch C++ library."""

from ._distmatch import (
    DistmatchError,
    FrequencyGrid,
    bernoulli_loss,
    bessel_j,
    cf_loss,
    cf_tail_mass,
    config_hash,
    empirical_cf,
    epps_pulley_loss,
    gradient_weights,
    run,
    simulate_returns,
    solve_jacobi_anger,
    standard_normal,
    target_cf,
    torus_deconvolve,
    train_preset,
    wasserstein1,
    wrapped_gaussian_modes,
)

__all__ = [
    "DistmatchError",
    "FrequencyGrid",
    "bernoulli_loss",
    "bessel_j",
    "cf_loss",
    "cf_tail_mass",
    "config_hash",
    "empirical_cf",
    "epps_pulley_loss",
    "gradient_weights",
    "run",
    "simulate_returns",
    "solve_jacobi_anger",
    "standard_normal",
    "target_cf",
    "torus_deconvolve",
    "train_preset",
    "wasserstein1",
    "wrapped_gaussian_modes",
]
