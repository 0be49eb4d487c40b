//! Raw moments `<x1^n1 x2^n2>` of a bivariate Gaussian.
//!
//! Two recursions are available, one lowering `n1`:
//!
//! ```text
//! M(n1, n2) = mu1 M(n1-1, n2) + V11 (n1-1) M(n1-2, n2) + V12 n2 M(n1-1, n2-1)
//! ```
//!
//! and its mirror lowering `n2`. Terms with a negative index vanish and
//! `M(0, 0) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

pub const DEFAULT_ORDER_CAP: u32 = 64;

/// Mean and covariance of a 2-D Gaussian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl GaussianBelief {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let b = Self { mean, cov };
        if mean
            .iter()
            .chain(cov.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(config_err("belief entries must be finite"));
        }
        let scale = cov[0][1].abs().max(cov[1][0].abs()).max(1.0);
        if (cov[0][1] - cov[1][0]).abs() > 1e-12 * scale {
            return Err(config_err("covariance must be symmetric"));
        }
        if b.eigenvalues()[0] < -1e-12 * (cov[0][0].abs() + cov[1][1].abs()).max(1.0) {
            return Err(config_err("covariance must be positive semi-definite"));
        }
        Ok(b)
    }

    pub fn point(mean: [f64; 2]) -> Self {
        Self {
            mean,
            cov: [[0.0; 2]; 2],
        }
    }

    pub fn symmetrized(mut self) -> Self {
        let off = 0.5 * (self.cov[0][1] + self.cov[1][0]);
        self.cov[0][1] = off;
        self.cov[1][0] = off;
        self
    }

    /// Eigenvalues of the (symmetrized) covariance, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let (a, d) = (self.cov[0][0], self.cov[1][1]);
        let b = 0.5 * (self.cov[0][1] + self.cov[1][0]);
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mid - rad, mid + rad]
    }

    /// Symmetrize and raise every covariance eigenvalue to at least `floor`.
    /// Returns the repaired belief and the smallest eigenvalue before repair.
    pub fn clamp_psd(&self, floor: f64) -> (Self, f64) {
        let sym = self.symmetrized();
        let [l0, l1] = sym.eigenvalues();
        if l0 >= floor {
            return (sym, l0);
        }
        let (a, b, d) = (sym.cov[0][0], sym.cov[0][1], sym.cov[1][1]);
        // unit eigenvector for the larger eigenvalue
        let (mut ux, mut uy) = if b.abs() > 0.0 {
            (l1 - d, b)
        } else if a >= d {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let norm = (ux * ux + uy * uy).sqrt();
        ux /= norm;
        uy /= norm;
        let (vx, vy) = (-uy, ux);
        let (m0, m1) = (l0.max(floor), l1.max(floor));
        let cov = [
            [m1 * ux * ux + m0 * vx * vx, m1 * ux * uy + m0 * vx * vy],
            [m1 * ux * uy + m0 * vx * vy, m1 * uy * uy + m0 * vy * vy],
        ];
        (
            Self {
                mean: sym.mean,
                cov,
            }
            .symmetrized(),
            l0,
        )
    }
}

/// Which index the recursion lowers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Lower the larger index; ties lower `n1`.
    #[default]
    LargerFirst,
    /// Lower `n1` whenever it is positive.
    FirstIndex,
    /// Lower `n2` whenever it is positive.
    SecondIndex,
}

/// Memoized raw-moment evaluator for one belief.
#[derive(Clone, Debug)]
pub struct RawMoments {
    belief: GaussianBelief,
    cap: u32,
    reduction: Reduction,
    memo: Vec<f64>,
}

impl RawMoments {
    pub fn new(belief: GaussianBelief) -> Self {
        Self::with_options(belief, DEFAULT_ORDER_CAP, Reduction::default())
    }

    pub fn with_options(belief: GaussianBelief, cap: u32, reduction: Reduction) -> Self {
        let side = cap as usize + 1;
        let mut memo = vec![f64::NAN; side * side];
        memo[0] = 1.0;
        Self {
            belief,
            cap,
            reduction,
            memo,
        }
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn get(&mut self, n1: u32, n2: u32) -> Result<f64> {
        let order = n1 + n2;
        if order > self.cap {
            return Err(Error::OrderOverflow {
                order,
                cap: self.cap,
            });
        }
        Ok(self.eval(n1, n2))
    }

    fn eval(&mut self, n1: u32, n2: u32) -> f64 {
        let idx = n1 as usize * (self.cap as usize + 1) + n2 as usize;
        let cached = self.memo[idx];
        if !cached.is_nan() {
            return cached;
        }
        let lower_first = match self.reduction {
            Reduction::LargerFirst => n1 >= n2,
            Reduction::FirstIndex => n1 > 0,
            Reduction::SecondIndex => n2 == 0,
        };
        let [m1, m2] = self.belief.mean;
        let c = self.belief.cov;
        let value = if lower_first {
            let mut v = m1 * self.eval(n1 - 1, n2);
            if n1 >= 2 {
                v += c[0][0] * f64::from(n1 - 1) * self.eval(n1 - 2, n2);
            }
            if n2 >= 1 {
                v += c[0][1] * f64::from(n2) * self.eval(n1 - 1, n2 - 1);
            }
            v
        } else {
            let mut v = m2 * self.eval(n1, n2 - 1);
            if n1 >= 1 {
                v += c[1][0] * f64::from(n1) * self.eval(n1 - 1, n2 - 1);
            }
            if n2 >= 2 {
                v += c[1][1] * f64::from(n2 - 1) * self.eval(n1, n2 - 2);
            }
            v
        };
        self.memo[idx] = value;
        value
    }
}

/// One-shot raw moment with the default cap and reduction order.
pub fn raw_moment(belief: &GaussianBelief, n1: u32, n2: u32) -> Result<f64> {
    RawMoments::new(*belief).get(n1, n2)
}
