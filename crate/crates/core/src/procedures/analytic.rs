//! Baseline procedures defined by thresholds on `Z1`, `Z2` and `Z_C`.
//!
//! Every rejection region here is bounded by vertical, horizontal and
//! diagonal (`Z_C = c`) lines. For fixed `z1` the rule is therefore
//! constant on finitely many `z2` intervals, so probabilities reduce to a
//! one-dimensional integral over `z1` of exact interval probabilities.

use super::{DiscreteProcedure, Procedure};
use crate::actions::ActionSpace;
use crate::error::{Error, Result};
use crate::kernel::RectGrid;
use crate::loss::{LossKind, LossSpec};
use crate::normal;
use crate::prior::{Component, Prior};
use crate::trial::{DerivedScale, H01, H02, H0C};
use serde::{Deserialize, Serialize};

const TAIL: f64 = 12.0;
const PANEL: f64 = 0.25;
const ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticKind {
    /// Reject `H0C` alone when `Z_C > z_{1-alpha}`.
    Ump,
    /// The UMP gate, then each `H0k` with `Z_k > z_{1-alpha}`.
    Rosenbaum,
    /// Closed testing over the exhaustive subsets with Bonferroni local
    /// tests.
    BergmannHommel,
    /// Song-Chi gatekeeping on `(H0C, H01)`, augmented to reject `H02`
    /// after a successful gate.
    SongChi { alpha0: f64, alpha1: f64, alpha2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticProcedure {
    pub kind: AnalyticKind,
    pub alpha: f64,
    pub scale: DerivedScale,
    #[serde(skip, default = "ActionSpace::testing")]
    space: ActionSpace,
}

/// Subsets of `{H01, H02, H0C}` that can be exactly the true nulls.
const EXHAUSTIVE: [u8; 5] = [H01, H02, H01 | H0C, H02 | H0C, H01 | H02 | H0C];

impl AnalyticProcedure {
    fn make(kind: AnalyticKind, scale: &DerivedScale, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if !(scale.rho[0] > 0.0 && scale.rho[1] > 0.0) {
            return Err(Error::Config("both correlations with Z_C must be positive".into()));
        }
        if let AnalyticKind::SongChi { alpha0, alpha1, alpha2 } = kind {
            let ok = (0.0..alpha).contains(&alpha0) && alpha1 > alpha && alpha1 <= 1.0 && (0.0..=1.0).contains(&alpha2);
            if !ok {
                return Err(Error::Config(format!(
                    "Song-Chi thresholds need 0 <= alpha0 < {alpha} < alpha1 <= 1 and 0 <= alpha2 <= 1"
                )));
            }
        }
        Ok(AnalyticProcedure {
            kind,
            alpha,
            scale: *scale,
            space: ActionSpace::testing(),
        })
    }

    pub fn ump(scale: &DerivedScale, alpha: f64) -> Result<Self> {
        Self::make(AnalyticKind::Ump, scale, alpha)
    }

    pub fn rosenbaum(scale: &DerivedScale, alpha: f64) -> Result<Self> {
        Self::make(AnalyticKind::Rosenbaum, scale, alpha)
    }

    pub fn bergmann_hommel(scale: &DerivedScale, alpha: f64) -> Result<Self> {
        Self::make(AnalyticKind::BergmannHommel, scale, alpha)
    }

    pub fn song_chi(scale: &DerivedScale, alpha: f64, alpha0: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        Self::make(AnalyticKind::SongChi { alpha0, alpha1, alpha2 }, scale, alpha)
    }

    /// Song-Chi with `alpha2` set to the largest value keeping the local
    /// test of `H01 & H0C` at level `alpha`.
    pub fn song_chi_calibrated(scale: &DerivedScale, alpha: f64, alpha0: f64, alpha1: f64) -> Result<Self> {
        let alpha2 = calibrate_song_chi_alpha2(scale, alpha, alpha0, alpha1)?;
        Self::song_chi(scale, alpha, alpha0, alpha1, alpha2)
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            AnalyticKind::Ump => "ump",
            AnalyticKind::Rosenbaum => "rosenbaum",
            AnalyticKind::BergmannHommel => "bergmann-hommel",
            AnalyticKind::SongChi { .. } => "song-chi",
        }
    }

    /// Rejected hypotheses at `(z1, z2)` as a bit mask.
    pub fn rejects(&self, z1: f64, z2: f64) -> u8 {
        let zc = self.scale.z_c(z1, z2);
        let q = normal::upper_quantile(self.alpha);
        match self.kind {
            AnalyticKind::Ump => {
                if zc > q {
                    H0C
                } else {
                    0
                }
            }
            AnalyticKind::Rosenbaum => {
                if zc > q {
                    H0C | if z1 > q { H01 } else { 0 } | if z2 > q { H02 } else { 0 }
                } else {
                    0
                }
            }
            AnalyticKind::BergmannHommel => {
                let z = [z1, z2, zc];
                let mut accepted = 0u8;
                for &j in &EXHAUSTIVE {
                    let size = j.count_ones() as f64;
                    let thr = normal::upper_quantile(self.alpha / size);
                    let top = (0..3).filter(|b| j & (1 << b) != 0).map(|b| z[b]).fold(f64::NEG_INFINITY, f64::max);
                    if top < thr {
                        accepted |= j;
                    }
                }
                (H01 | H02 | H0C) & !accepted
            }
            AnalyticKind::SongChi { alpha0, alpha1, alpha2 } => {
                let c0 = normal::upper_quantile(alpha0);
                let c1 = normal::upper_quantile(alpha1);
                let q2 = normal::upper_quantile(alpha2);
                if zc > c0 {
                    H0C | if z1 > q { H01 } else { 0 } | if z2 > q { H02 } else { 0 }
                } else if zc > c1 && z1 > q2 {
                    H01 | if zc > q { H0C } else { 0 }
                } else {
                    0
                }
            }
        }
    }

    /// Threshold lines `(z1 = a, z2 = b, z_C = c)` bounding the regions.
    pub fn thresholds(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let q = normal::upper_quantile(self.alpha);
        let (a, b, c) = match self.kind {
            AnalyticKind::Ump => (vec![], vec![], vec![q]),
            AnalyticKind::Rosenbaum => (vec![q], vec![q], vec![q]),
            AnalyticKind::BergmannHommel => {
                let qs: Vec<f64> = (1..=3).map(|k| normal::upper_quantile(self.alpha / k as f64)).collect();
                (qs.clone(), qs.clone(), qs)
            }
            AnalyticKind::SongChi { alpha0, alpha1, alpha2 } => (
                vec![q, normal::upper_quantile(alpha2)],
                vec![q],
                vec![q, normal::upper_quantile(alpha0), normal::upper_quantile(alpha1)],
            ),
        };
        let finite = |v: Vec<f64>| v.into_iter().filter(|x| x.is_finite()).collect::<Vec<_>>();
        (finite(a), finite(b), finite(c))
    }

    /// Points on the `z1` axis where the interval structure in `z2` changes.
    fn z1_breaks(&self) -> Vec<f64> {
        let (a, b, c) = self.thresholds();
        let [r1, r2] = self.scale.rho;
        let mut out = a;
        for cc in &c {
            for bb in &b {
                out.push((cc - r2 * bb) / r1);
            }
        }
        out
    }

    /// Maximal `z2` intervals on which the rule is constant for this `z1`,
    /// with the rule's value there.
    fn z2_pieces(&self, z1: f64, b: &[f64], c: &[f64]) -> Vec<(f64, f64, u8)> {
        let [r1, r2] = self.scale.rho;
        let mut cuts: Vec<f64> = b.to_vec();
        cuts.extend(c.iter().map(|cc| (cc - r1 * z1) / r2));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend(cuts);
        edges.push(f64::INFINITY);
        edges
            .windows(2)
            .map(|w| {
                let probe = match (w[0].is_finite(), w[1].is_finite()) {
                    (true, true) => 0.5 * (w[0] + w[1]),
                    (false, true) => w[1] - 1.0,
                    (true, false) => w[0] + 1.0,
                    (false, false) => 0.0,
                };
                (w[0], w[1], self.rejects(z1, probe))
            })
            .collect()
    }

    /// `int g(z1) sum_pieces h(z1, lo, hi, mask) dz1` over `[lo1, hi1]`.
    fn integrate<G, H>(&self, lo1: f64, hi1: f64, g: G, h: H) -> f64
    where
        G: Fn(f64) -> f64,
        H: Fn(f64, f64, f64, u8) -> f64,
    {
        let (_, b, c) = self.thresholds();
        let breaks = self.z1_breaks();
        normal::integrate_panels(
            |z1| {
                let w = g(z1);
                if w == 0.0 {
                    return 0.0;
                }
                w * self.z2_pieces(z1, &b, &c).iter().map(|&(lo, hi, m)| h(z1, lo, hi, m)).sum::<f64>()
            },
            lo1,
            hi1,
            &breaks,
            PANEL,
            ORDER,
        )
    }

    /// Bayes risk under a testing loss.
    pub fn bayes_risk(&self, loss: &LossSpec, prior: &Prior) -> Result<f64> {
        if matches!(loss.kind, LossKind::Decision { .. }) {
            return Err(Error::Config("analytic baselines are testing procedures".into()));
        }
        prior.validate()?;
        let mut total = 0.0;
        for (w, comp) in &prior.components {
            total += w * self.component_risk(loss, comp);
        }
        Ok(total)
    }

    /// Prior-weighted loss avoided relative to never rejecting.
    pub fn expected_gain(&self, loss: &LossSpec, prior: &Prior) -> Result<f64> {
        let mut base = 0.0;
        for (w, comp) in &prior.components {
            base += w * loss.empty_action_mean(comp)?;
        }
        Ok(base - self.bayes_risk(loss, prior)?)
    }

    fn component_risk(&self, loss: &LossSpec, comp: &Component) -> f64 {
        let (mean, sd) = (comp.mean(), comp.sd());
        if sd == [0.0, 0.0] {
            let [d1, d2] = mean;
            return (0..2)
                .map(|k| {
                    let p = self.power(d1, d2, 1 << k);
                    let dk = mean[k];
                    p * loss.axis(k, true, dk) + (1.0 - p) * loss.axis(k, false, dk)
                })
                .sum();
        }
        // marginally Z_k ~ N(mean_k, 1 + sd_k^2)
        let s = [0, 1].map(|k| (1.0 + sd[k] * sd[k]).sqrt());
        let marg = |k: usize, z: f64| normal::pdf((z - mean[k]) / s[k]) / s[k];
        let (lo2, hi2) = (mean[1] - TAIL * s[1], mean[1] + TAIL * s[1]);
        self.integrate(
            mean[0] - TAIL * s[0],
            mean[0] + TAIL * s[0],
            |_| 1.0,
            |z1, lo, hi, m| {
                let cov1 = m & H01 != 0;
                let cov2 = m & H02 != 0;
                let first = loss.axis_density(0, cov1, mean[0], sd[0], z1)
                    * (normal::cdf((hi - mean[1]) / s[1]) - normal::cdf((lo - mean[1]) / s[1]));
                let (l, h) = (lo.max(lo2), hi.min(hi2));
                let second = if h > l {
                    marg(0, z1)
                        * normal::integrate_panels(|z2| loss.axis_density(1, cov2, mean[1], sd[1], z2), l, h, &[], 0.5, ORDER)
                } else {
                    0.0
                };
                first + second
            },
        )
    }
}

impl Procedure for AnalyticProcedure {
    fn space(&self) -> &ActionSpace {
        &self.space
    }

    fn prob_where(&self, delta1: f64, delta2: f64, pred: &dyn Fn(u8) -> bool) -> f64 {
        self.integrate(
            delta1 - TAIL,
            delta1 + TAIL,
            |z1| normal::pdf(z1 - delta1),
            |_, lo, hi, m| {
                if pred(m) {
                    normal::shifted_interval(lo, hi, delta2)
                } else {
                    0.0
                }
            },
        )
        .clamp(0.0, 1.0)
    }
}

/// Size of the Song-Chi local test of `H01 & H0C` at the global null, where
/// it is largest: `P[Z_C > c0] + P[c1 < Z_C <= c0, Z1 > q2]`.
pub fn song_chi_size(scale: &DerivedScale, alpha0: f64, alpha1: f64, alpha2: f64) -> f64 {
    let c0 = normal::upper_quantile(alpha0);
    let c1 = normal::upper_quantile(alpha1);
    let q2 = normal::upper_quantile(alpha2);
    let r = scale.rho[0];
    let cond_sd = (1.0 - r * r).sqrt();
    // Z1 | Z_C = u ~ N(r u, 1 - r^2)
    let band = normal::integrate_panels(|u| normal::pdf(u) * normal::sf((q2 - r * u) / cond_sd), c1, c0, &[], PANEL, ORDER);
    normal::sf(c0) + band
}

/// Largest `alpha2` with `song_chi_size <= alpha`, by bisection.
pub fn calibrate_song_chi_alpha2(scale: &DerivedScale, alpha: f64, alpha0: f64, alpha1: f64) -> Result<f64> {
    let size = |a2: f64| song_chi_size(scale, alpha0, alpha1, a2);
    if size(0.0) > alpha {
        return Err(Error::Bisection("the gate alone already exceeds alpha".into()));
    }
    if size(1.0) <= alpha {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if size(mid) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Discretize an analytic rule by its value at each cell center.
pub fn discretize_analytic(proc_: &AnalyticProcedure, grid: &RectGrid) -> Result<DiscreteProcedure> {
    let actions: Vec<u8> = grid
        .rects()
        .map(|r| {
            let (z1, z2) = r.center();
            proc_.rejects(z1, z2)
        })
        .collect();
    DiscreteProcedure::from_actions(proc_.label(), grid.clone(), ActionSpace::testing(), &actions)
}

/// Prior-predictive probability of the cells crossed by one of the rule's
/// threshold lines: a bound on the error from discretizing it.
pub fn straddle_mass(proc_: &AnalyticProcedure, grid: &RectGrid, prior: &Prior) -> f64 {
    let (a, b, c) = proc_.thresholds();
    let mut total = 0.0;
    for r in grid.rects() {
        let crosses = a.iter().any(|v| *v > r.lo1 && *v < r.hi1)
            || b.iter().any(|v| *v > r.lo2 && *v < r.hi2)
            || c.iter().any(|v| {
                let lo = proc_.scale.z_c(r.lo1, r.lo2);
                let hi = proc_.scale.z_c(r.hi1, r.hi2);
                *v > lo && *v < hi
            });
        if !crosses {
            continue;
        }
        for (w, comp) in &prior.components {
            let (m, sd) = (comp.mean(), comp.sd());
            let s = [0, 1].map(|k| (1.0 + sd[k] * sd[k]).sqrt());
            let p1 = normal::interval((r.lo1 - m[0]) / s[0], (r.hi1 - m[0]) / s[0]);
            let p2 = normal::interval((r.lo2 - m[1]) / s[1], (r.hi2 - m[1]) / s[1]);
            total += w * p1 * p2;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym() -> DerivedScale {
        DerivedScale::from_rho(0.5f64.sqrt(), [2.0693, 2.0693])
    }

    #[test]
    fn rosenbaum_examples() {
        let p = AnalyticProcedure::rosenbaum(&sym(), 0.05).unwrap();
        assert_eq!(p.rejects(3.0, 3.0), H01 | H02 | H0C);
        assert_eq!(p.rejects(1.0, 1.0), 0);
        assert_eq!(p.rejects(3.0, -0.5), H01 | H0C);
    }

    #[test]
    fn bergmann_hommel_examples() {
        let p = AnalyticProcedure::bergmann_hommel(&sym(), 0.05).unwrap();
        assert_eq!(p.rejects(4.0, 4.0), H01 | H02 | H0C);
        assert_eq!(p.rejects(0.0, 0.0), 0);
        // z_C = 2.2 / sqrt 2 = 1.556; by hand: {H02} and {H02, H0C}
        // survive, every set containing H01 fails
        assert_eq!(p.rejects(2.2, 0.0), H01);
    }

    #[test]
    fn song_chi_branches() {
        let s = sym();
        let p = AnalyticProcedure::song_chi(&s, 0.05, 0.045, 0.1, 0.03).unwrap();
        assert_eq!(p.rejects(6.0, 6.0), H01 | H02 | H0C);
        // z_C between the alpha1 and alpha0 cut-offs, above z_0.95
        let zc = 0.5 * (normal::upper_quantile(0.05) + normal::upper_quantile(0.045));
        let z1 = 2.5;
        let z2 = (zc - s.rho[0] * z1) / s.rho[1];
        assert_eq!(p.rejects(z1, z2), H01 | H0C);
        // same band below z_0.95: only H01
        let zc = 0.5 * (normal::upper_quantile(0.1) + normal::upper_quantile(0.05));
        let z2 = (zc - s.rho[0] * z1) / s.rho[1];
        assert_eq!(p.rejects(z1, z2), H01);
        for z2 in [-3.0, 0.0, 1.0] {
            assert_eq!(p.rejects(1.0, z2) & H02, 0);
        }
        assert!(AnalyticProcedure::song_chi(&s, 0.05, 0.06, 0.1, 0.0).is_err());
    }

    #[test]
    fn ump_closed_form_matches_quadrature() {
        let s = sym();
        let p = AnalyticProcedure::ump(&s, 0.05).unwrap();
        for (d1, d2) in [(0.0, 0.0), (2.0693, 2.0693), (1.0, -0.4), (-2.0, 3.0)] {
            let closed = crate::trial::ump_power(&s, 0.05, d1, d2);
            let quad = p.power(d1, d2, H0C);
            assert!((closed - quad).abs() < 1e-10, "{closed} vs {quad}");
        }
        assert!((p.fwer_at(&s, 0.0, 0.0, false) - 0.05).abs() < 1e-10);
    }

    #[test]
    fn point_mass_risk_agrees_between_routes() {
        let s = sym();
        let loss = LossSpec::indicator(s.delta_min);
        let p = AnalyticProcedure::rosenbaum(&s, 0.05).unwrap();
        // a point mass, and a normal so narrow it behaves like one
        let d = [2.3, 0.7];
        let point = Prior::point_mass(d);
        let narrow = Prior::new(vec![(1.0, Component::Normal { mean: d, sd: [1e-3, 1e-3] })]).unwrap();
        let a = p.bayes_risk(&loss, &point).unwrap();
        let b = p.bayes_risk(&loss, &narrow).unwrap();
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }

    #[test]
    fn calibrated_alpha2_hits_level() {
        let s = sym();
        let a2 = calibrate_song_chi_alpha2(&s, 0.05, 0.045, 0.1).unwrap();
        // oracle: the band probability from the bivariate normal density of
        // (Z_C, Z1), integrated on a rectangle
        let r = s.rho[0];
        let c0 = normal::upper_quantile(0.045);
        let c1 = normal::upper_quantile(0.1);
        let q2 = normal::upper_quantile(a2);
        let det = 1.0 - r * r;
        let dens = |u: f64, v: f64| {
            (-(u * u - 2.0 * r * u * v + v * v) / (2.0 * det)).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
        };
        let band = normal::integrate_panels(
            |u| normal::integrate_panels(|v| dens(u, v), q2, 12.0, &[], 0.25, 20),
            c1,
            c0,
            &[],
            0.05,
            20,
        );
        let size = normal::sf(c0) + band;
        assert!((size - 0.05).abs() < 1e-6, "size {size}");
        assert!(song_chi_size(&s, 0.045, 0.1, (a2 + 0.01).min(1.0)) > 0.05);
        assert_eq!(song_chi_size(&s, 0.045, 0.1, 0.0), normal::sf(c0));
        let a2_bigger_gate = calibrate_song_chi_alpha2(&s, 0.05, 0.048, 0.1).unwrap();
        assert!(a2_bigger_gate < a2);
    }

    #[test]
    fn discretized_ump_close_to_closed_form() {
        let s = sym();
        let p = AnalyticProcedure::ump(&s, 0.05).unwrap();
        let point = Prior::point_mass(s.delta_min);
        let mut errs = Vec::new();
        for tau in [0.2, 0.1] {
            let grid = RectGrid::square(tau, 5.0).unwrap();
            let d = discretize_analytic(&p, &grid).unwrap();
            let err = (d.power(s.delta_min[0], s.delta_min[1], H0C) - p.power(s.delta_min[0], s.delta_min[1], H0C)).abs();
            let mass = straddle_mass(&p, &grid, &point);
            let outside = 1.0 - grid.coverage(s.delta_min[0], s.delta_min[1]);
            assert!(err <= mass + outside, "tau {tau}: {err} > {mass}");
            errs.push(mass);
        }
        let ratio = errs[1] / errs[0];
        assert!((0.35..0.65).contains(&ratio), "straddle ratio {ratio}");
    }
}
