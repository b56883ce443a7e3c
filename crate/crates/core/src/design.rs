//! Randomized-offset switchback design.
//!
//! Assignments cover positions `1-m ..= T`; the `m` leading positions are
//! burn-in so that the window `D_{t-m..t}` exists for every `t >= 1`. A first
//! switch `o` is drawn uniformly from `1..=block_len`; blocks start at
//! `o, o + block_len, o + 2 block_len, ...` and the partial segment
//! `[1-m, o-1]` forms its own block. Each block is treated with probability
//! `treat_prob`, independently.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Generator;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SwitchbackDesign {
    /// Carryover horizon.
    pub m: usize,
    /// Switching period, must exceed `m`.
    pub block_len: usize,
    pub treat_prob: f64,
}

impl Default for SwitchbackDesign {
    fn default() -> Self {
        Self { m: 5, block_len: 10, treat_prob: 0.5 }
    }
}

/// Constant window value whose probability is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowValue {
    AllOnes,
    AllZeros,
}

/// Returned when a window pattern is neither all ones nor all zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixedWindow;

impl core::fmt::Display for MixedWindow {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("window pattern must be all ones or all zeros")
    }
}

impl TryFrom<&[u8]> for WindowValue {
    type Error = MixedWindow;

    fn try_from(bits: &[u8]) -> Result<Self, MixedWindow> {
        if !bits.is_empty() && bits.iter().all(|&b| b == 1) {
            Ok(Self::AllOnes)
        } else if !bits.is_empty() && bits.iter().all(|&b| b == 0) {
            Ok(Self::AllZeros)
        } else {
            Err(MixedWindow)
        }
    }
}

impl SwitchbackDesign {
    pub fn check(&self) -> Result<(), &'static str> {
        if self.block_len == 0 || self.block_len <= self.m {
            return Err("block_len must exceed m");
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            return Err("treat_prob must lie in (0, 1)");
        }
        Ok(())
    }

    /// Classical lower bound `(block_len - m) / (2 block_len)` on the
    /// constant-window probability at `treat_prob = 1/2`.
    pub fn window_prob_lower_bound(&self) -> f64 {
        (self.block_len as f64 - self.m as f64) / (2.0 * self.block_len as f64)
    }

    /// Number of blocks meeting the window `[t-m, t]` for first switch `o`.
    fn blocks_in_window(&self, t: i64, offset: i64) -> u32 {
        let ell = self.block_len as i64;
        let lo = t - self.m as i64; // exclusive
        let mut count = 1;
        let mut q = offset;
        if q <= lo {
            q += ((lo - q) / ell + 1) * ell;
        }
        while q <= t {
            count += 1;
            q += ell;
        }
        count
    }

    /// `P(D_{t-m..t} = 1)` and `P(D_{t-m..t} = 0)` by exact enumeration of
    /// the equally likely offsets.
    pub fn window_probs(&self, t: usize) -> (f64, f64) {
        let p = self.treat_prob;
        let (mut ones, mut zeros) = (0.0, 0.0);
        for offset in 1..=self.block_len as i64 {
            let k = self.blocks_in_window(t as i64, offset) as i32;
            ones += libm::pow(p, f64::from(k));
            zeros += libm::pow(1.0 - p, f64::from(k));
        }
        let n = self.block_len as f64;
        (ones / n, zeros / n)
    }
}

/// Exact design probability that the window ending at `t` is constant at `b`.
pub fn switchback_window_prob(design: &SwitchbackDesign, t: usize, b: WindowValue) -> f64 {
    let (ones, zeros) = design.window_probs(t);
    match b {
        WindowValue::AllOnes => ones,
        WindowValue::AllZeros => zeros,
    }
}

/// Realized switchback assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignments {
    /// `T + m` values; index `j` is position `j + 1 - m`.
    pub values: Vec<u8>,
    /// First switch, in `1..=block_len`.
    pub offset: usize,
}

impl Assignments {
    /// Treatment at position `q` in `1-m ..= T`.
    pub fn at(&self, q: i64, m: usize) -> u8 {
        self.values[(q + m as i64 - 1) as usize]
    }
}

/// Draws one realization of the design for horizon `t_len`.
pub fn draw_switchback_assignments(
    design: &SwitchbackDesign,
    t_len: usize,
    rng: &mut Generator,
) -> Assignments {
    let m = design.m;
    let ell = design.block_len.max(1);
    let offset = 1 + rng.below(ell as u64) as usize;
    let mut values = vec![0u8; t_len + m];
    let mut block = usize::MAX;
    let mut current = 0u8;
    for (j, v) in values.iter_mut().enumerate() {
        let q = j as i64 + 1 - m as i64;
        let id = if q < offset as i64 { 0 } else { 1 + (q as usize - offset) / ell };
        if id != block {
            block = id;
            current = rng.bernoulli(design.treat_prob);
        }
        *v = current;
    }
    Assignments { values, offset }
}
