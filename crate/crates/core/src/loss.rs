//! Loss functions. Every supported loss is a sum of one term per
//! subpopulation, each depending only on whether the action covers that
//! subpopulation and on its own non-centrality; the objective builder and
//! the dual bound both lean on that split.

use crate::actions::{ActionSpace, SpaceKind};
use crate::error::{Error, Result};
use crate::normal;
use crate::prior::{Component, Prior};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// One unit per subpopulation with `delta_k >= delta_k_min` whose
    /// null is not rejected.
    Indicator,
    /// Like `Indicator` but the unit penalty is replaced by `delta_k`.
    Proportional,
    /// Recommendation loss with false-positive and false-negative
    /// penalties per subpopulation.
    Decision { false_pos: [f64; 2], false_neg: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub delta_min: [f64; 2],
}

impl LossSpec {
    pub fn indicator(delta_min: [f64; 2]) -> Self {
        LossSpec {
            kind: LossKind::Indicator,
            delta_min,
        }
    }

    pub fn proportional(delta_min: [f64; 2]) -> Self {
        LossSpec {
            kind: LossKind::Proportional,
            delta_min,
        }
    }

    /// Decision loss with the same penalties in both subpopulations.
    pub fn decision(false_pos: f64, false_neg: f64, delta_min: [f64; 2]) -> Self {
        LossSpec {
            kind: LossKind::Decision {
                false_pos: [false_pos; 2],
                false_neg: [false_neg; 2],
            },
            delta_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossKind::Decision { false_pos, false_neg } = self.kind {
            if false_pos.iter().chain(&false_neg).any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Config("loss penalties must be nonnegative".into()));
            }
        }
        if self.delta_min.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config("loss thresholds must be positive".into()));
        }
        Ok(())
    }

    /// Action space the loss is defined on.
    pub fn space_kind(&self) -> SpaceKind {
        match self.kind {
            LossKind::Decision { .. } => SpaceKind::Decision,
            _ => SpaceKind::Testing,
        }
    }

    /// Term for subpopulation `k`.
    pub fn axis(&self, k: usize, covered: bool, delta: f64) -> f64 {
        let benefit = delta >= self.delta_min[k];
        match self.kind {
            LossKind::Indicator => (benefit && !covered) as u8 as f64,
            LossKind::Proportional => {
                if benefit && !covered {
                    delta
                } else {
                    0.0
                }
            }
            LossKind::Decision { false_pos, false_neg } => {
                if covered && !benefit {
                    false_pos[k]
                } else if !covered && benefit {
                    false_neg[k]
                } else {
                    0.0
                }
            }
        }
    }

    /// Loss of any action given by its coverage bits (bit `k` set when
    /// subpopulation `k` is covered). Accepts actions outside the coherent
    /// space, which the dual bound needs.
    pub fn value(&self, action: u8, delta1: f64, delta2: f64) -> f64 {
        self.axis(0, action & 1 != 0, delta1) + self.axis(1, action & 2 != 0, delta2)
    }

    /// Loss of an action from `space`, checking that loss and action space
    /// agree.
    pub fn eval(&self, space: &ActionSpace, action: u8, delta1: f64, delta2: f64) -> Result<f64> {
        if space.kind != self.space_kind() || space.position(action).is_none() {
            return Err(Error::ActionSpace {
                action,
                space: space.name(),
            });
        }
        Ok(self.value(action, delta1, delta2))
    }

    /// `E_lambda[ axis(k, covered, delta) phi(z - delta) ]` for
    /// `delta ~ N(mean, sd^2)` (a point mass when `sd == 0`), in closed form.
    pub fn axis_density(&self, k: usize, covered: bool, mean: f64, sd: f64, z: f64) -> f64 {
        if sd == 0.0 {
            return self.axis(k, covered, mean) * normal::pdf(z - mean);
        }
        let s2 = sd * sd;
        let tot = (1.0 + s2).sqrt();
        let marginal = normal::pdf((z - mean) / tot) / tot;
        let post_mean = mean + s2 * (z - mean) / (1.0 + s2);
        let post_sd = sd / tot;
        let a = (self.delta_min[k] - post_mean) / post_sd;
        match self.kind {
            LossKind::Indicator => {
                if covered {
                    0.0
                } else {
                    marginal * normal::sf(a)
                }
            }
            LossKind::Proportional => {
                if covered {
                    0.0
                } else {
                    marginal * (post_mean * normal::sf(a) + post_sd * normal::pdf(a))
                }
            }
            LossKind::Decision { false_pos, false_neg } => {
                if covered {
                    false_pos[k] * marginal * normal::cdf(a)
                } else {
                    false_neg[k] * marginal * normal::sf(a)
                }
            }
        }
    }

    /// Largest loss over the effective support of `prior`; errors when it
    /// is not finite.
    pub fn bound_on(&self, prior: &Prior) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (_, c) in &prior.components {
            let (lo, hi) = c.support();
            for k in 0..2 {
                let m = match self.kind {
                    LossKind::Indicator => 1.0,
                    LossKind::Proportional => hi[k].abs().max(lo[k].abs()),
                    LossKind::Decision { false_pos, false_neg } => false_pos[k].max(false_neg[k]),
                };
                worst = worst.max(m);
            }
        }
        let total = 2.0 * worst;
        if !total.is_finite() {
            return Err(Error::Config("loss is unbounded on the prior support".into()));
        }
        Ok(total)
    }

    /// Loss of the empty action integrated against a single component.
    pub fn empty_action_mean(&self, c: &Component) -> Result<f64> {
        let (mean, sd) = (c.mean(), c.sd());
        let mut total = 0.0;
        for k in 0..2 {
            if sd[k] == 0.0 {
                total += self.axis(k, false, mean[k]);
                continue;
            }
            let t = (self.delta_min[k] - mean[k]) / sd[k];
            total += match self.kind {
                LossKind::Indicator => normal::sf(t),
                LossKind::Proportional => mean[k] * normal::sf(t) + sd[k] * normal::pdf(t),
                LossKind::Decision { false_neg, .. } => false_neg[k] * normal::sf(t),
            };
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::{H01, H02, H0C};

    const M: [f64; 2] = [2.0, 1.5];

    #[test]
    fn indicator_values() {
        let l = LossSpec::indicator(M);
        let s = ActionSpace::testing();
        assert_eq!(l.eval(&s, 0, M[0], M[1]).unwrap(), 2.0);
        for &a in &s.actions {
            assert_eq!(l.eval(&s, a, 0.0, 0.0).unwrap(), 0.0);
        }
        assert_eq!(l.eval(&s, H01 | H02 | H0C, 5.0, 5.0).unwrap(), 0.0);
        assert_eq!(l.eval(&s, H01 | H0C, 5.0, 5.0).unwrap(), 1.0);
        assert!(l.eval(&ActionSpace::decision(), 1, 0.0, 0.0).is_err());
        assert!(l.eval(&s, H01 | H02, 0.0, 0.0).is_err());
    }

    #[test]
    fn indicator_nonincreasing_in_rejections() {
        let l = LossSpec::indicator(M);
        let s = ActionSpace::testing();
        for &a in &s.actions {
            for &b in &s.actions {
                if a & b == a {
                    for &(x, y) in &[(0.0, 0.0), (2.0, 0.0), (3.0, 1.6), (-1.0, 4.0)] {
                        assert!(l.value(b, x, y) <= l.value(a, x, y));
                    }
                }
            }
        }
    }

    #[test]
    fn proportional_dominated_by_scaled_indicator() {
        let i = LossSpec::indicator(M);
        let p = LossSpec::proportional(M);
        for &(x, y) in &[(2.0, 0.0), (3.0, 1.6), (0.5, 4.0), (2.5, 2.5)] {
            for a in 0..8u8 {
                assert!(p.value(a, x, y) <= f64::max(x, y) * i.value(a, x, y) + 1e-15);
            }
        }
    }

    #[test]
    fn decision_loss() {
        let l = LossSpec::decision(2.0, 1.0, M);
        let s = ActionSpace::decision();
        assert_eq!(l.eval(&s, 3, 0.0, 0.0).unwrap(), 4.0);
        assert_eq!(l.eval(&s, 0, M[0], M[1]).unwrap(), 2.0);
        for a in 0..4u8 {
            let split = l.axis(0, a & 1 != 0, 1.0) + l.axis(1, a & 2 != 0, 3.0);
            assert_eq!(l.value(a, 1.0, 3.0), split);
        }
    }

    #[test]
    fn axis_density_matches_quadrature() {
        for l in [LossSpec::indicator(M), LossSpec::proportional(M), LossSpec::decision(2.0, 1.0, M)] {
            for &covered in &[false, true] {
                for &z in &[-1.0, 0.5, 2.3] {
                    let (mean, sd) = (1.8, 0.9);
                    let direct = normal::integrate_panels(
                        |d| l.axis(0, covered, d) * normal::pdf(z - d) * normal::pdf((d - mean) / sd) / sd,
                        mean - 12.0 * sd,
                        mean + 12.0 * sd,
                        &[M[0]],
                        0.1,
                        20,
                    );
                    let closed = l.axis_density(0, covered, mean, sd, z);
                    assert!((direct - closed).abs() < 1e-12, "{direct} vs {closed}");
                }
            }
        }
    }

    #[test]
    fn empty_action_mean_matches_split_quadrature() {
        let c = Component::Normal {
            mean: [1.0, 0.3],
            sd: [0.5, 0.8],
        };
        for l in [LossSpec::indicator(M), LossSpec::proportional(M), LossSpec::decision(2.0, 1.0, M)] {
            let oracle = crate::prior::integrate_component_split(&|a, b| l.value(0, a, b), &c, [&[M[0]], &[M[1]]]);
            let got = l.empty_action_mean(&c).unwrap();
            assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        }
    }
}
