//! Finite-N conversion-loss bounds.

/// Discrete time: `r_max * tau_max / sqrt(N)`.
pub fn dt_bound(r_max: f64, tau_max: f64, n_arms: usize) -> f64 {
    r_max * tau_max / (n_arms as f64).sqrt()
}

/// Continuous time: `r_max * (1 + 2 g_max tau) / sqrt(N)`.
pub fn ct_bound(r_max: f64, g_max: f64, tau: f64, n_arms: usize) -> f64 {
    r_max * (1.0 + 2.0 * g_max * tau) / (n_arms as f64).sqrt()
}
