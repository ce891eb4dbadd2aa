//! Exogenous time signals: leader paths and formation size laws.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::LeaderSignal;

/// Trajectory of a leader or reference point, with analytic velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeaderPath {
    Fixed {
        position: Vec<f64>,
    },
    /// `center + amplitude * sin(omega t + phase)` per axis.
    Lissajous {
        center: Vec<f64>,
        amplitude: Vec<f64>,
        omega: Vec<f64>,
        phase: Vec<f64>,
    },
    /// From `start` to `end` along a smoothstep profile over `duration`,
    /// then at rest.
    Line {
        start: Vec<f64>,
        end: Vec<f64>,
        duration: f64,
    },
}

impl LeaderPath {
    pub fn dim(&self) -> usize {
        match self {
            LeaderPath::Fixed { position } => position.len(),
            LeaderPath::Lissajous { center, .. } => center.len(),
            LeaderPath::Line { start, .. } => start.len(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            LeaderPath::Fixed { position } => position.len() == dim && position.iter().all(|v| v.is_finite()),
            LeaderPath::Lissajous { center, amplitude, omega, phase } => [center, amplitude, omega, phase]
                .iter()
                .all(|v| v.len() == dim && v.iter().all(|x| x.is_finite())),
            LeaderPath::Line { start, end, duration } => {
                start.len() == dim
                    && end.len() == dim
                    && start.iter().chain(end).all(|x| x.is_finite())
                    && *duration > 0.0
                    && duration.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("leader path must be finite with dimension {dim}")))
        }
    }

    pub fn signal(&self, t: f64) -> LeaderSignal {
        match self {
            LeaderPath::Fixed { position } => LeaderSignal {
                position: DVector::from_column_slice(position),
                velocity: DVector::zeros(position.len()),
            },
            LeaderPath::Lissajous { center, amplitude, omega, phase } => {
                let n = center.len();
                LeaderSignal {
                    position: DVector::from_fn(n, |k, _| center[k] + amplitude[k] * (omega[k] * t + phase[k]).sin()),
                    velocity: DVector::from_fn(n, |k, _| amplitude[k] * omega[k] * (omega[k] * t + phase[k]).cos()),
                }
            }
            LeaderPath::Line { start, end, duration } => {
                let s = (t / duration).clamp(0.0, 1.0);
                let blend = s * s * (3.0 - 2.0 * s);
                let rate = if t > 0.0 && t < *duration { 6.0 * s * (1.0 - s) / duration } else { 0.0 };
                let n = start.len();
                LeaderSignal {
                    position: DVector::from_fn(n, |k, _| start[k] + blend * (end[k] - start[k])),
                    velocity: DVector::from_fn(n, |k, _| rate * (end[k] - start[k])),
                }
            }
        }
    }
}

/// Edge-length scale `d(t) = base (1 + amplitude sin(2 pi t / period))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeLaw {
    pub base: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
}

fn default_period() -> f64 {
    20.0
}

impl SizeLaw {
    pub fn constant(base: f64) -> Self {
        Self { base, amplitude: 0.0, period: default_period() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.period > 0.0 && self.amplitude.abs() < 1.0) || !self.base.is_finite() {
            return Err(Error::Config(
                "size law needs base > 0, period > 0 and |amplitude| < 1".into(),
            ));
        }
        Ok(())
    }

    /// `(d(t), d'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * PI / self.period;
        (
            self.base * (1.0 + self.amplitude * (w * t).sin()),
            self.base * self.amplitude * w * (w * t).cos(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(path: &LeaderPath, ts: &[f64]) {
        let h = 1e-6;
        for &t in ts {
            let s = path.signal(t);
            let fd = (path.signal(t + h).position - path.signal(t - h).position) / (2.0 * h);
            assert!((fd - &s.velocity).amax() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn velocities_match_positions() {
        fd_check(
            &LeaderPath::Lissajous {
                center: vec![0.0, 0.1, 0.2],
                amplitude: vec![0.5, 0.3, 0.2],
                omega: vec![0.3, 0.6, 0.2],
                phase: vec![0.0, 1.0, 0.5],
            },
            &[0.0, 1.3, 7.7],
        );
        fd_check(
            &LeaderPath::Line { start: vec![-1.0, 0.0], end: vec![1.0, 0.5], duration: 10.0 },
            &[0.5, 5.0, 9.5, 12.0],
        );
    }

    #[test]
    fn line_holds_after_duration() {
        let p = LeaderPath::Line { start: vec![-1.0, 0.0], end: vec![1.0, 0.0], duration: 4.0 };
        let s = p.signal(10.0);
        assert_eq!(s.position, DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(s.velocity, DVector::zeros(2));
    }

    #[test]
    fn size_law_rate() {
        let law = SizeLaw { base: 0.5, amplitude: 0.3, period: 20.0 };
        let h = 1e-6;
        for t in [0.0, 3.0, 11.0] {
            let fd = (law.eval(t + h).0 - law.eval(t - h).0) / (2.0 * h);
            assert!((fd - law.eval(t).1).abs() < 1e-9);
        }
        assert!(SizeLaw { base: 0.5, amplitude: 1.0, period: 20.0 }.validate().is_err());
    }
}
