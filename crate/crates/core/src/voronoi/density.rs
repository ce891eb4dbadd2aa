//! Time-varying importance densities: a positive floor plus isotropic
//! Gaussians whose centers move along sinusoids.

use serde::{Deserialize, Serialize};

use super::geometry::{Point, RectDomain};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingGaussian {
    pub amplitude: f64,
    pub sigma: f64,
    /// Mean center.
    pub center: Point,
    /// Center at time t is `center + sway * sin(omega t + phase)` per axis.
    #[serde(default)]
    pub sway: Point,
    #[serde(default)]
    pub omega: Point,
    #[serde(default)]
    pub phase: Point,
}

impl MovingGaussian {
    pub fn fixed(amplitude: f64, sigma: f64, center: Point) -> Self {
        Self {
            amplitude,
            sigma,
            center,
            sway: [0.0; 2],
            omega: [0.0; 2],
            phase: [0.0; 2],
        }
    }

    pub fn center_at(&self, t: f64) -> (Point, Point) {
        let mut c = [0.0; 2];
        let mut v = [0.0; 2];
        for k in 0..2 {
            let arg = self.omega[k] * t + self.phase[k];
            c[k] = self.center[k] + self.sway[k] * arg.sin();
            v[k] = self.sway[k] * self.omega[k] * arg.cos();
        }
        (c, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityField {
    /// Lower bound on the density; keeps every cell's mass positive.
    pub floor: f64,
    #[serde(default)]
    pub components: Vec<MovingGaussian>,
}

impl Default for DensityField {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl DensityField {
    pub fn uniform(level: f64) -> Self {
        Self { floor: level, components: Vec::new() }
    }

    pub fn new(floor: f64, components: Vec<MovingGaussian>) -> Result<Self> {
        let d = Self { floor, components };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::Config(format!("density floor must be positive, got {}", self.floor)));
        }
        for (k, g) in self.components.iter().enumerate() {
            let finite = [g.amplitude, g.sigma]
                .iter()
                .chain(&g.center)
                .chain(&g.sway)
                .chain(&g.omega)
                .chain(&g.phase)
                .all(|v| v.is_finite());
            if !finite || g.amplitude < 0.0 || g.sigma <= 0.0 {
                return Err(Error::Config(format!(
                    "density component {k} needs finite values, amplitude >= 0 and sigma > 0"
                )));
            }
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.components
            .iter()
            .all(|g| g.sway.iter().zip(&g.omega).all(|(a, w)| *a == 0.0 || *w == 0.0))
    }

    /// Freezes component centers at time `t` for fast repeated evaluation.
    pub fn at(&self, t: f64) -> FrozenDensity {
        FrozenDensity {
            floor: self.floor,
            blobs: self
                .components
                .iter()
                .map(|g| {
                    let (c, v) = g.center_at(t);
                    Blob {
                        amplitude: g.amplitude,
                        inv_two_var: 0.5 / (g.sigma * g.sigma),
                        inv_var: 1.0 / (g.sigma * g.sigma),
                        center: c,
                        velocity: v,
                    }
                })
                .collect(),
        }
    }

    pub fn value(&self, q: Point, t: f64) -> f64 {
        self.at(t).eval(q).0
    }

    pub fn partial_t(&self, q: Point, t: f64) -> f64 {
        self.at(t).eval(q).1
    }

    /// Moving two-blob density used by the coverage scenario.
    pub fn drifting_pair(domain: &RectDomain) -> Self {
        let cx = 0.5 * (domain.x_min + domain.x_max);
        let cy = 0.5 * (domain.y_min + domain.y_max);
        let wx = domain.x_max - domain.x_min;
        let wy = domain.y_max - domain.y_min;
        Self {
            floor: 1e-3,
            components: vec![
                MovingGaussian {
                    amplitude: 1.0,
                    sigma: 0.35,
                    center: [cx - 0.2 * wx, cy],
                    sway: [0.12 * wx, 0.2 * wy],
                    omega: [0.2, 0.3],
                    phase: [0.0, 0.0],
                },
                MovingGaussian {
                    amplitude: 0.8,
                    sigma: 0.3,
                    center: [cx + 0.2 * wx, cy],
                    sway: [0.1 * wx, 0.2 * wy],
                    omega: [0.25, 0.2],
                    phase: [1.0, 2.0],
                },
            ],
        }
    }
}

#[derive(Debug, Clone)]
struct Blob {
    amplitude: f64,
    inv_two_var: f64,
    inv_var: f64,
    center: Point,
    velocity: Point,
}

/// A density snapshot at a fixed time.
#[derive(Debug, Clone)]
pub struct FrozenDensity {
    floor: f64,
    blobs: Vec<Blob>,
}

impl FrozenDensity {
    /// Returns `(rho, d rho / dt)` at `q`.
    #[inline]
    pub fn eval(&self, q: Point) -> (f64, f64) {
        let mut rho = self.floor;
        let mut rate = 0.0;
        for b in &self.blobs {
            let dx = q[0] - b.center[0];
            let dy = q[1] - b.center[1];
            let g = b.amplitude * (-(dx * dx + dy * dy) * b.inv_two_var).exp();
            rho += g;
            rate += g * (dx * b.velocity[0] + dy * b.velocity[1]) * b.inv_var;
        }
        (rho, rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_bounds_density() {
        let d = DensityField::drifting_pair(&RectDomain::default());
        for k in 0..50 {
            let q = [-1.6 + 0.064 * k as f64, 0.9 - 0.03 * k as f64];
            assert!(d.value(q, 0.37 * k as f64) >= d.floor);
        }
    }

    #[test]
    fn rate_matches_time_difference() {
        let d = DensityField::drifting_pair(&RectDomain::default());
        let h = 1e-5;
        for k in 0..20 {
            let q = [-1.5 + 0.15 * k as f64, -0.8 + 0.08 * k as f64];
            let t = 0.9 * k as f64;
            let fd = (d.value(q, t + h) - d.value(q, t - h)) / (2.0 * h);
            let an = d.partial_t(q, t);
            assert!((fd - an).abs() <= 1e-8 * (1.0 + an.abs()), "{fd} vs {an}");
        }
    }

    #[test]
    fn static_detection() {
        assert!(DensityField::uniform(1.0).is_static());
        assert!(!DensityField::drifting_pair(&RectDomain::default()).is_static());
        let fixed = DensityField::new(1e-3, vec![MovingGaussian::fixed(1.0, 0.3, [0.0, 0.0])]).unwrap();
        assert!(fixed.is_static());
        assert_eq!(fixed.partial_t([0.2, 0.1], 3.0), 0.0);
    }

    #[test]
    fn rejects_nonpositive_floor() {
        assert!(DensityField::new(0.0, vec![]).is_err());
        assert!(DensityField::new(1e-3, vec![MovingGaussian::fixed(1.0, 0.0, [0.0, 0.0])]).is_err());
    }
}
