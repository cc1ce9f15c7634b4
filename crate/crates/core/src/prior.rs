//! Priors over `(delta1, delta2)`: finite mixtures of point masses and
//! diagonal bivariate normals.

use crate::error::{Error, Result};
use crate::normal;
use crate::trial::DerivedScale;
use serde::{Deserialize, Serialize};

/// Normal components are treated as supported on `mean +- SUPPORT_SDS * sd`.
pub const SUPPORT_SDS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Component {
    PointMass { mean: [f64; 2] },
    Normal { mean: [f64; 2], sd: [f64; 2] },
}

impl Component {
    pub fn mean(&self) -> [f64; 2] {
        match *self {
            Component::PointMass { mean } | Component::Normal { mean, .. } => mean,
        }
    }

    pub fn sd(&self) -> [f64; 2] {
        match *self {
            Component::PointMass { .. } => [0.0, 0.0],
            Component::Normal { sd, .. } => sd,
        }
    }

    /// Effective support box `(lo, hi)`.
    pub fn support(&self) -> ([f64; 2], [f64; 2]) {
        let (m, s) = (self.mean(), self.sd());
        (
            [m[0] - SUPPORT_SDS * s[0], m[1] - SUPPORT_SDS * s[1]],
            [m[0] + SUPPORT_SDS * s[0], m[1] + SUPPORT_SDS * s[1]],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub components: Vec<(f64, Component)>,
}

impl Prior {
    pub fn new(components: Vec<(f64, Component)>) -> Result<Self> {
        let p = Prior { components };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Config("prior has no components".into()));
        }
        let mut total = 0.0;
        for (w, c) in &self.components {
            if !(*w >= 0.0) {
                return Err(Error::Config("prior weights must be nonnegative".into()));
            }
            if c.sd().iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return Err(Error::Config("prior standard deviations must be finite and nonnegative".into()));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("prior weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Four components at `(0,0), (d1,0), (0,d2), (d1,d2)` with the given
    /// weights; normal components use sd `delta_min / 2` when `normal`.
    pub fn four_point(scale: &DerivedScale, weights: [f64; 4], normal: bool) -> Result<Self> {
        let [d1, d2] = scale.delta_min;
        let means = [[0.0, 0.0], [d1, 0.0], [0.0, d2], [d1, d2]];
        let comps = weights
            .iter()
            .zip(means)
            .map(|(w, mean)| {
                let c = if normal {
                    Component::Normal {
                        mean,
                        sd: [d1 / 2.0, d2 / 2.0],
                    }
                } else {
                    Component::PointMass { mean }
                };
                (*w, c)
            })
            .collect();
        Prior::new(comps)
    }

    /// Named priors: `sym`, `asym`, `sym-normal`, `asym-normal`,
    /// `subpop-only`.
    pub fn builtin(name: &str, scale: &DerivedScale) -> Result<Self> {
        let sym = [0.25; 4];
        let asym = [0.2, 0.35, 0.1, 0.35];
        match name {
            "sym" => Prior::four_point(scale, sym, false),
            "asym" => Prior::four_point(scale, asym, false),
            "sym-normal" => Prior::four_point(scale, sym, true),
            "asym-normal" => Prior::four_point(scale, asym, true),
            "subpop-only" => Prior::four_point(scale, [0.0, 0.5, 0.5, 0.0], false),
            other => Err(Error::UnknownName(format!("prior '{other}'"))),
        }
    }

    pub fn point_mass(delta: [f64; 2]) -> Self {
        Prior {
            components: vec![(1.0, Component::PointMass { mean: delta })],
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.components.iter().all(|(_, c)| matches!(c, Component::PointMass { .. }))
    }
}

/// `E[f]` under one component. Point masses evaluate `f` directly; normal
/// components use a product Gauss-Hermite rule starting at 40 x 40 nodes and
/// doubling until successive estimates agree to 1e-9 relative.
pub fn integrate_component<F: Fn(f64, f64) -> f64>(f: &F, c: &Component) -> Result<f64> {
    match *c {
        Component::PointMass { mean } => Ok(f(mean[0], mean[1])),
        Component::Normal { mean, sd } => {
            let mut order = 40;
            let mut prev = gh_product(f, mean, sd, order);
            while order < 320 {
                order *= 2;
                let next = gh_product(f, mean, sd, order);
                if (next - prev).abs() <= 1e-9 * next.abs().max(1e-300) || (next - prev).abs() < 1e-15 {
                    return Ok(next);
                }
                prev = next;
            }
            Err(Error::Quadrature(format!(
                "Gauss-Hermite estimates still moving at order {order}"
            )))
        }
    }
}

fn gh_product<F: Fn(f64, f64) -> f64>(f: &F, mean: [f64; 2], sd: [f64; 2], order: usize) -> f64 {
    let r = normal::gauss_hermite(order);
    let norm = std::f64::consts::PI;
    let s2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    for (x, wx) in r.nodes.iter().zip(&r.weights) {
        let d1 = mean[0] + s2 * sd[0] * x;
        for (y, wy) in r.nodes.iter().zip(&r.weights) {
            let d2 = mean[1] + s2 * sd[1] * y;
            total += wx * wy * f(d1, d2);
        }
    }
    total / norm
}

/// `E[f]` under one component for integrands with jumps: tensor
/// Gauss-Legendre panels (order 16, width sd/4) over the effective support,
/// split at the given breakpoints on each axis.
pub fn integrate_component_split<F: Fn(f64, f64) -> f64>(f: &F, c: &Component, breaks: [&[f64]; 2]) -> f64 {
    match *c {
        Component::PointMass { mean } => f(mean[0], mean[1]),
        Component::Normal { mean, sd } => {
            let axis = |k: usize| -> (Vec<f64>, Vec<f64>) {
                if sd[k] == 0.0 {
                    return (vec![mean[k]], vec![1.0]);
                }
                let (lo, hi) = (mean[k] - SUPPORT_SDS * sd[k], mean[k] + SUPPORT_SDS * sd[k]);
                let (xs, ws) = normal::panel_nodes(lo, hi, breaks[k], sd[k] / 4.0, 16);
                let ws = xs
                    .iter()
                    .zip(ws)
                    .map(|(x, w)| w * normal::pdf((x - mean[k]) / sd[k]) / sd[k])
                    .collect();
                (xs, ws)
            };
            let (x1, w1) = axis(0);
            let (x2, w2) = axis(1);
            let mut total = 0.0;
            for (a, wa) in x1.iter().zip(&w1) {
                let mut inner = 0.0;
                for (b, wb) in x2.iter().zip(&w2) {
                    inner += wb * f(*a, *b);
                }
                total += wa * inner;
            }
            total
        }
    }
}

/// `sum_j w_j E_{lambda_j}[f]`.
pub fn integrate_prior<F: Fn(f64, f64) -> f64>(f: F, prior: &Prior) -> Result<f64> {
    let mut total = 0.0;
    for (w, c) in &prior.components {
        if *w == 0.0 {
            continue;
        }
        total += w * integrate_component(&f, c)?;
    }
    Ok(total)
}
