//! Trial design, the non-centrality scale of the two subpopulation
//! z-statistics, the null hypotheses and the UMP test of the combined null.

use crate::error::{Error, Result};
use crate::normal;
use serde::{Deserialize, Serialize};

/// Bit for the subpopulation 1 null `H01`.
pub const H01: u8 = 1;
/// Bit for the subpopulation 2 null `H02`.
pub const H02: u8 = 2;
/// Bit for the combined population null `H0C`.
pub const H0C: u8 = 4;
/// All three nulls.
pub const ALL_NULLS: u8 = H01 | H02 | H0C;

/// Parameters of a two-arm trial with two subpopulations.
///
/// `sigma2[k][a]` is the outcome variance in subpopulation `k` on arm `a`
/// (arm 0 control, arm 1 treatment). The sample size `n` is real valued.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialDesign {
    pub p1: f64,
    pub sigma2: [[f64; 2]; 2],
    pub n: f64,
    pub delta_min: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl TrialDesign {
    pub fn new(p1: f64, sigma2: [[f64; 2]; 2], n: f64, delta_min: f64, alpha: f64, beta: f64) -> Result<Self> {
        let d = TrialDesign {
            p1,
            sigma2,
            n,
            delta_min,
            alpha,
            beta,
        };
        d.validate()?;
        Ok(d)
    }

    /// Common variance `sigma2` in every arm and subpopulation, unit
    /// minimum effect, and `n` set to `n_min`.
    pub fn common_variance(p1: f64, sigma2: f64, alpha: f64, beta: f64) -> Result<Self> {
        let mut d = TrialDesign::new(p1, [[sigma2; 2]; 2], 1.0, 1.0, alpha, beta)?;
        d.n = d.n_min()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDesign(m.to_string()));
        if !(self.p1 > 0.0 && self.p1 < 1.0) {
            return bad("p1 must lie in (0, 1)");
        }
        if self.sigma2.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("variances must be positive and finite");
        }
        if !(self.n > 0.0) || !self.n.is_finite() {
            return bad("n must be positive");
        }
        if !(self.delta_min > 0.0) {
            return bad("delta_min must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad("alpha must lie in (0, 0.5)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn p2(&self) -> f64 {
        1.0 - self.p1
    }

    pub fn proportion(&self, k: usize) -> f64 {
        if k == 0 {
            self.p1
        } else {
            self.p2()
        }
    }

    /// Number of participants in subpopulation `k` on arm `a`.
    pub fn arm_size(&self, k: usize) -> f64 {
        self.proportion(k) * self.n / 2.0
    }

    pub fn with_n(&self, n: f64) -> Self {
        TrialDesign { n, ..*self }
    }

    pub fn scale(&self) -> DerivedScale {
        let v = [0, 1].map(|k| {
            let nk = self.arm_size(k);
            self.sigma2[k][1] / nk + self.sigma2[k][0] / nk
        });
        let p = [self.p1, self.p2()];
        let denom = p[0] * p[0] * v[0] + p[1] * p[1] * v[1];
        let rho = [0, 1].map(|k| (p[k] * p[k] * v[k] / denom).sqrt());
        let delta_min = [0, 1].map(|k| self.delta_min / v[k].sqrt());
        DerivedScale { v, rho, delta_min }
    }

    /// Smallest real `n` at which the UMP test of `H0C` reaches power
    /// `1 - beta` when both subpopulation effects equal `delta_min`.
    ///
    /// Found by bracket expansion and bisection on the power, which is
    /// increasing in `n`.
    pub fn n_min(&self) -> Result<f64> {
        let target = 1.0 - self.beta;
        let power = |n: f64| {
            let s = self.with_n(n).scale();
            ump_power(&s, self.alpha, s.delta_min[0], s.delta_min[1])
        };
        let mut lo = 1e-12_f64;
        let mut hi = 1.0_f64;
        let mut expansions = 0;
        while power(hi) < target {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > 200 {
                return Err(Error::Bisection("could not bracket n_min".into()));
            }
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if power(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(hi)
    }

    /// `n_min` rounded up to the next integer.
    pub fn n_min_integer(&self) -> Result<f64> {
        Ok(self.n_min()?.ceil())
    }
}

/// Quantities derived from a design that fix the distribution of
/// `(Z1, Z2)`: variance denominators, correlations of each `Z_k` with
/// `Z_C`, and the non-centrality of the minimum effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScale {
    pub v: [f64; 2],
    pub rho: [f64; 2],
    pub delta_min: [f64; 2],
}

impl DerivedScale {
    /// A scale given directly by `rho1` and the minimum non-centralities.
    pub fn from_rho(rho1: f64, delta_min: [f64; 2]) -> Self {
        let rho2 = (1.0 - rho1 * rho1).sqrt();
        DerivedScale {
            v: [1.0, 1.0],
            rho: [rho1, rho2],
            delta_min,
        }
    }

    /// Non-centrality of `Z_C`.
    pub fn delta_c(&self, d1: f64, d2: f64) -> f64 {
        self.rho[0] * d1 + self.rho[1] * d2
    }

    pub fn z_c(&self, z1: f64, z2: f64) -> f64 {
        self.rho[0] * z1 + self.rho[1] * z2
    }

    /// Minimum-effect alternative `(delta1_min, delta2_min)`.
    pub fn both_min(&self) -> [f64; 2] {
        self.delta_min
    }
}

/// Map effect sizes to non-centrality parameters.
pub fn non_centrality(design: &TrialDesign, big_delta1: f64, big_delta2: f64) -> (f64, f64) {
    let s = design.scale();
    (big_delta1 / s.v[0].sqrt(), big_delta2 / s.v[1].sqrt())
}

/// The set of true null hypotheses at a parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NullSet {
    pub contains_h01: bool,
    pub contains_h02: bool,
    pub contains_h0c: bool,
}

impl NullSet {
    pub fn from_mask(mask: u8) -> Self {
        NullSet {
            contains_h01: mask & H01 != 0,
            contains_h02: mask & H02 != 0,
            contains_h0c: mask & H0C != 0,
        }
    }

    pub fn mask(&self) -> u8 {
        (self.contains_h01 as u8) * H01 | (self.contains_h02 as u8) * H02 | (self.contains_h0c as u8) * H0C
    }

    pub fn is_empty(&self) -> bool {
        self.mask() == 0
    }

    pub fn label(&self) -> String {
        mask_label(self.mask())
    }
}

/// Human-readable label for a set of hypotheses, e.g. `H01+H0C`.
pub fn mask_label(mask: u8) -> String {
    let mut parts = Vec::new();
    if mask & H01 != 0 {
        parts.push("H01");
    }
    if mask & H02 != 0 {
        parts.push("H02");
    }
    if mask & H0C != 0 {
        parts.push("H0C");
    }
    if parts.is_empty() {
        "none".to_string()
    } else {
        parts.join("+")
    }
}

/// True nulls at `(delta1, delta2)`; boundary points count as null.
pub fn true_nulls(scale: &DerivedScale, delta1: f64, delta2: f64) -> NullSet {
    NullSet {
        contains_h01: delta1 <= 0.0,
        contains_h02: delta2 <= 0.0,
        contains_h0c: scale.delta_c(delta1, delta2) <= 0.0,
    }
}

/// UMP level-`alpha` test of `H0C`: rejects iff `rho . z > z_{1-alpha}`.
pub fn ump_rejects(scale: &DerivedScale, alpha: f64, z1: f64, z2: f64) -> bool {
    scale.z_c(z1, z2) > normal::upper_quantile(alpha)
}

/// Power of the UMP test of `H0C` at `(delta1, delta2)`.
pub fn ump_power(scale: &DerivedScale, alpha: f64, delta1: f64, delta2: f64) -> f64 {
    normal::sf(normal::upper_quantile(alpha) - scale.delta_c(delta1, delta2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym() -> TrialDesign {
        TrialDesign::common_variance(0.5, 1.0, 0.05, 0.1).unwrap()
    }

    #[test]
    fn correlations_square_to_one() {
        for &p1 in &[0.1, 0.5, 0.63, 0.9] {
            let d = TrialDesign::new(p1, [[1.0, 2.0], [0.5, 3.0]], 100.0, 1.0, 0.05, 0.1).unwrap();
            let s = d.scale();
            assert!((s.rho[0].powi(2) + s.rho[1].powi(2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_variance_noncentrality_formula() {
        let (n, sigma2, dmin) = (200.0, 2.5, 0.7);
        let d = TrialDesign::new(0.5, [[sigma2; 2]; 2], n, dmin, 0.05, 0.1).unwrap();
        let (d1, d2) = non_centrality(&d, dmin, dmin);
        let expected = dmin * (n / (8.0 * sigma2)).sqrt();
        assert!((d1 - expected).abs() < 1e-12);
        assert!((d2 - expected).abs() < 1e-12);
        assert_eq!(non_centrality(&d, 0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn noncentrality_scales_with_root_n() {
        let d = TrialDesign::new(0.63, [[1.0, 1.5], [2.0, 0.5]], 80.0, 1.0, 0.05, 0.1).unwrap();
        let (a, b) = non_centrality(&d, 0.3, 0.4);
        let (c, e) = non_centrality(&d.with_n(4.0 * 80.0), 0.3, 0.4);
        assert!((c / a - 2.0).abs() < 1e-10);
        assert!((e / b - 2.0).abs() < 1e-10);
    }

    #[test]
    fn n_min_hits_target_power() {
        let d = sym();
        let s = d.scale();
        let p = ump_power(&s, 0.05, s.delta_min[0], s.delta_min[1]);
        assert!((p - 0.9).abs() < 1e-9);
        // closed form: delta_C(n) grows like sqrt(n)
        let s1 = d.with_n(1.0).scale();
        let dc1 = s1.delta_c(s1.delta_min[0], s1.delta_min[1]);
        let closed = ((normal::upper_quantile(0.05) + normal::upper_quantile(0.1)) / dc1).powi(2);
        assert!((d.n - closed).abs() < 1e-9 * closed);
    }

    #[test]
    fn doubling_variances_doubles_n_min() {
        let a = TrialDesign::new(0.63, [[1.0, 1.2], [0.8, 1.1]], 1.0, 1.0, 0.05, 0.1).unwrap();
        let mut b = a;
        for row in b.sigma2.iter_mut() {
            for v in row.iter_mut() {
                *v *= 2.0;
            }
        }
        let (na, nb) = (a.n_min().unwrap(), b.n_min().unwrap());
        assert!((nb / na - 2.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_minimum_noncentrality() {
        let s = sym().scale();
        let zsum = normal::upper_quantile(0.05) + normal::upper_quantile(0.1);
        // rho_k = 1/sqrt(2) and delta1 = delta2 so delta_C = sqrt(2) delta_min
        assert!((s.delta_min[0] - zsum / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn null_sets() {
        let s = sym().scale();
        assert_eq!(true_nulls(&s, 0.0, 0.0).mask(), ALL_NULLS);
        assert_eq!(true_nulls(&s, s.delta_min[0], 0.0).mask(), H02);
        let t = 0.7;
        assert_eq!(true_nulls(&s, s.rho[1] * t, -s.rho[0] * t).mask(), H02 | H0C);
        for &(a, b) in &[(-1.0, -2.0), (0.0, -0.1), (-3.0, 0.0)] {
            assert!(true_nulls(&s, a, b).contains_h0c);
        }
    }

    #[test]
    fn ump_rule() {
        let s = DerivedScale::from_rho(0.5f64.sqrt(), [2.0, 2.0]);
        assert!(ump_rejects(&s, 0.05, 3.0, 3.0));
        assert!(!ump_rejects(&s, 0.05, 0.0, 0.0));
        let c = normal::upper_quantile(0.05);
        // exactly on the boundary along z1 = z2
        let z = c / (2.0 * s.rho[0]);
        let on = s.z_c(z, z);
        if on <= c {
            assert!(!ump_rejects(&s, 0.05, z, z));
        }
        assert!((ump_power(&s, 0.05, 0.0, 0.0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn invalid_designs_rejected() {
        assert!(TrialDesign::new(1.0, [[1.0; 2]; 2], 10.0, 1.0, 0.05, 0.1).is_err());
        assert!(TrialDesign::new(0.5, [[0.0, 1.0], [1.0, 1.0]], 10.0, 1.0, 0.05, 0.1).is_err());
        assert!(TrialDesign::new(0.5, [[1.0; 2]; 2], 10.0, 1.0, 0.6, 0.1).is_err());
    }
}
