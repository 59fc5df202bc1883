//! Nearest-cell projection onto the grid `kΔ`, `Δ = π/ω_c`, and the lag-class
//! sums `S_k`, `n_k`.
//!
//! Pairs are unordered and include the diagonal `i = j`, so every lag class
//! counts each pair once and `Σ n_k = N(N+1)/2`. Cells are assigned by
//! round-half-up on `s/Δ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    omega_c: f64,
    delta: f64,
    num_cells: usize,
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

impl GridSpec {
    /// Grid with spacing `π/omega_c` covering `[0, domain_length]`.
    pub fn new(omega_c: f64, domain_length: f64) -> Result<Self> {
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(Error::parameter(format!(
                "cutoff frequency must be positive, got {omega_c}"
            )));
        }
        if !(domain_length > 0.0 && domain_length.is_finite()) {
            return Err(Error::parameter(format!(
                "domain length must be positive, got {domain_length}"
            )));
        }
        let delta = PI / omega_c;
        let cells = round_half_up(domain_length / delta);
        if cells > 1e8 {
            return Err(Error::parameter(format!(
                "grid would need {cells} cells; lower the cutoff frequency"
            )));
        }
        Ok(GridSpec {
            omega_c,
            delta,
            num_cells: (cells as usize + 1).max(2),
        })
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    /// Cell index of location `s`.
    pub fn cell_of(&self, s: f64) -> usize {
        round_half_up(s / self.delta).max(0.0) as usize
    }
}

/// `ω_c = ρπ` with `ρ = N / domain_length` the mean sampling rate.
pub fn default_cutoff(sample: &SampleSet) -> Result<f64> {
    let l = sample.domain_length();
    if !(l > 0.0) {
        return Err(Error::parameter("domain length must be positive"));
    }
    Ok(sample.len() as f64 / l * PI)
}

/// `S_k` and `n_k` for lag classes `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSums {
    pub s: Vec<f64>,
    pub n: Vec<u64>,
}

impl LagSums {
    pub fn max_lag(&self) -> usize {
        self.s.len().saturating_sub(1)
    }

    /// Number of lag classes `k ≥ 1` with at least one pair.
    pub fn nonzero_classes(&self) -> usize {
        self.n.iter().skip(1).filter(|&&n| n > 0).count()
    }

    pub fn total_pairs(&self) -> u64 {
        self.n.iter().sum()
    }
}

/// Accumulates lag sums through per-cell totals: with `t_c = ΣX`,
/// `q_c = ΣX²` and `m_c` the count in cell `c`,
/// `S_0 = Σ_c (t_c² + q_c)/2`, `S_k = Σ_c t_c t_{c+k}`.
/// `k_max` caps the number of lag classes.
pub fn accumulate_lag_sums(sample: &SampleSet, grid: &GridSpec, k_max: Option<usize>) -> LagSums {
    let mut cells: Vec<(usize, f64, f64, u64)> = Vec::new();
    let mut highest = 0;
    for (&s, &x) in sample.locations().iter().zip(sample.values()) {
        let c = grid.cell_of(s);
        highest = highest.max(c);
        // locations are sorted, so equal cells are adjacent
        match cells.last_mut() {
            Some(last) if last.0 == c => {
                last.1 += x;
                last.2 += x * x;
                last.3 += 1;
            }
            _ => cells.push((c, x, x * x, 1)),
        }
    }
    let span = (grid.num_cells() - 1).max(highest);
    let k_top = k_max.map_or(span, |m| m.min(span));
    let mut s = vec![0.0; k_top + 1];
    let mut n = vec![0u64; k_top + 1];
    for (i, &(ci, ti, qi, mi)) in cells.iter().enumerate() {
        s[0] += 0.5 * (ti * ti + qi);
        n[0] += mi * (mi + 1) / 2;
        for &(cj, tj, _, mj) in &cells[i + 1..] {
            let k = cj - ci;
            if k > k_top {
                break;
            }
            s[k] += ti * tj;
            n[k] += mi * mj;
        }
    }
    LagSums { s, n }
}
