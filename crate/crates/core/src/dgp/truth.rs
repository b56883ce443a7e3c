//! True estimands: closed forms and Monte Carlo oracles.

use alloc::vec::Vec;

use super::{simulate_switchback_with_assignments, AdeDgpConfig, SwitchbackDgpConfig};
use crate::math::{self, KahanSum};
use crate::rng::RngStream;
use crate::dgp::ade::ar1_step;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruthMethod {
    Analytic,
    OracleMonteCarlo { replications: usize, seed: RngStream, se: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSpec {
    pub psi_star: f64,
    pub method: TruthMethod,
}

impl TruthSpec {
    pub fn se(&self) -> f64 {
        match self.method {
            TruthMethod::Analytic => 0.0,
            TruthMethod::OracleMonteCarlo { se, .. } => se,
        }
    }
}

/// Finite-horizon average direct effect
/// `direct + interaction * (1/T) sum_t E[H_t]`.
pub fn true_ade(cfg: &AdeDgpConfig, t_len: usize) -> TruthSpec {
    let mut acc = KahanSum::new();
    for t in 1..=t_len.max(1) {
        acc.add(cfg.mean_state(t));
    }
    let mean_h = acc.total() / t_len.max(1) as f64;
    TruthSpec {
        psi_star: cfg.direct_coef + cfg.interaction_coef * mean_h,
        method: TruthMethod::Analytic,
    }
}

fn summarize(per_rep: &[f64], seed: RngStream) -> TruthSpec {
    let se = math::sqrt(math::sample_variance(per_rep) / per_rep.len() as f64);
    TruthSpec {
        psi_star: math::mean(per_rep),
        method: TruthMethod::OracleMonteCarlo { replications: per_rep.len(), seed, se },
    }
}

/// Averages `f*(1, X_t, H_t) - f*(0, X_t, H_t)` along `replications`
/// simulated chains of length `t_len`.
pub fn true_ade_oracle(
    cfg: &AdeDgpConfig,
    t_len: usize,
    replications: usize,
    seed: RngStream,
) -> TruthSpec {
    let per_rep: Vec<f64> = (0..replications as u64)
        .map(|r| {
            let mut g = seed.derive(r).generator();
            let mut h = match cfg.h0_mode {
                super::H0Mode::Deterministic { value } => value,
                super::H0Mode::StationaryDraw => {
                    g.normal(1.0, math::sqrt(cfg.stationary_variance()))
                }
            };
            let mut acc = KahanSum::new();
            for _ in 0..t_len {
                h = ar1_step(h, cfg.h_noise_sd * g.standard_normal(), cfg);
                acc.add(cfg.contrast(h));
            }
            acc.total() / t_len as f64
        })
        .collect();
    summarize(&per_rep, seed)
}

/// Global average treatment effect; the carryover term moves from 1 to
/// `exp(-1/spill_scale)` between the all-control and all-treated regimes.
pub fn true_gate(cfg: &SwitchbackDgpConfig) -> TruthSpec {
    TruthSpec { psi_star: cfg.gate(), method: TruthMethod::Analytic }
}

/// Simulates outcomes under forced all-ones and all-zeros assignments on
/// independent streams and averages the difference.
pub fn true_gate_oracle(
    cfg: &SwitchbackDgpConfig,
    t_len: usize,
    replications: usize,
    seed: RngStream,
) -> TruthSpec {
    let n = t_len + cfg.m();
    let ones = alloc::vec![1u8; n];
    let zeros = alloc::vec![0u8; n];
    let per_rep: Vec<f64> = (0..replications as u64)
        .map(|r| {
            let base = seed.derive(r);
            let mut g1 = base.derive(0).generator();
            let mut g0 = base.derive(1).generator();
            let treated = simulate_switchback_with_assignments(cfg, t_len, &ones, &mut g1)
                .expect("validated config");
            let control = simulate_switchback_with_assignments(cfg, t_len, &zeros, &mut g0)
                .expect("validated config");
            let mut acc = KahanSum::new();
            for (a, b) in treated.obs.iter().zip(&control.obs) {
                acc.add(a.y - b.y);
            }
            acc.total() / t_len as f64
        })
        .collect();
    summarize(&per_rep, seed)
}
