use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{run, Scenario, SimConfig};
use crate::error::{Error, Result};
use crate::qp::QpStatus;

/// One row of a trace: the state at `time` and what every agent decided.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub positions: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    pub v_total: f64,
    pub barriers: Vec<f64>,
    pub min_h: Option<f64>,
    pub statuses: Vec<QpStatus>,
    pub active_sets: Vec<Vec<usize>>,
    pub residuals: Vec<Vec<f64>>,
    pub auto_slacked: Vec<bool>,
    /// The interaction topology differs from the previous row's.
    pub switched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub scenario: String,
    pub dt: f64,
    pub alpha_rate: f64,
    /// False when Lyapunov rows carry slack; envelope metrics are then `None`.
    pub envelope_applies: bool,
    pub records: Vec<StepRecord>,
    /// Wall-clock time of the run; not part of trace equality checks.
    pub runtime_s: f64,
}

impl SimulationTrace {
    pub fn initial_v(&self) -> f64 {
        self.records.first().map_or(0.0, |r| r.v_total)
    }

    pub fn final_v(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.v_total)
    }

    /// `V(0) exp(-lambda (t - t0))` at row `k`.
    pub fn envelope(&self, k: usize) -> f64 {
        let t0 = self.records[0].time;
        self.initial_v() * (-self.alpha_rate * (self.records[k].time - t0)).exp()
    }

    pub fn min_h(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.min_h).reduce(f64::min)
    }

    pub fn switches(&self) -> usize {
        self.records.iter().filter(|r| r.switched).count()
    }

    /// True when the rows (not the timing) agree bit for bit.
    pub fn same_rows(&self, other: &Self) -> bool {
        self.records == other.records
    }

    /// One row per step: `t`, `x_{i}_{k}`, `u_{i}_{k}`, `V_{i}`, `V_total`,
    /// `envelope`, `min_h`, `qp_status_{i}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let Some(first) = self.records.first() else {
            w.flush()?;
            return Ok(());
        };
        let mut header = vec!["t".to_string()];
        for (i, p) in first.positions.iter().enumerate() {
            header.extend((0..p.len()).map(|k| format!("x_{i}_{k}")));
        }
        for (i, u) in first.controls.iter().enumerate() {
            header.extend((0..u.len()).map(|k| format!("u_{i}_{k}")));
        }
        header.extend((0..first.lyapunov.len()).map(|i| format!("V_{i}")));
        header.extend(["V_total".into(), "envelope".into(), "min_h".into()]);
        header.extend((0..first.statuses.len()).map(|i| format!("qp_status_{i}")));
        w.write_record(&header).map_err(io)?;
        for (k, r) in self.records.iter().enumerate() {
            let mut row = vec![r.time.to_string()];
            row.extend(r.positions.iter().flatten().map(f64::to_string));
            row.extend(r.controls.iter().flatten().map(f64::to_string));
            row.extend(r.lyapunov.iter().map(f64::to_string));
            row.push(r.v_total.to_string());
            row.push(self.envelope(k).to_string());
            row.push(r.min_h.map_or(String::new(), |h| h.to_string()));
            row.extend(r.statuses.iter().map(|s| s.as_str().to_string()));
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metrics(&self, eps_int: f64) -> Metrics {
        let report = self.envelope_applies.then(|| envelope_monitor(self, self.alpha_rate, eps_int));
        Metrics {
            final_v: self.final_v(),
            initial_v: self.initial_v(),
            min_h: self.min_h(),
            envelope_violations: report.as_ref().map(|r| r.violations.len()),
            max_envelope_excess: report.map(|r| r.max_excess),
            eps_int,
            switches: self.switches(),
            auto_slacked_solves: self.records.iter().flat_map(|r| &r.auto_slacked).filter(|s| **s).count(),
            steps: self.records.len().saturating_sub(1),
            runtime_s: self.runtime_s,
        }
    }
}

/// Summary written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "final_V")]
    pub final_v: f64,
    #[serde(rename = "initial_V")]
    pub initial_v: f64,
    pub min_h: Option<f64>,
    pub envelope_violations: Option<usize>,
    pub max_envelope_excess: Option<f64>,
    pub eps_int: f64,
    pub switches: usize,
    pub auto_slacked_solves: usize,
    pub steps: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    /// `V(0) exp(-lambda t)` per row.
    pub bound: Vec<f64>,
    /// Rows where `V(t) > bound + eps_int`.
    pub violations: Vec<usize>,
    /// Largest `V(t) - V(0) exp(-lambda t)` over the trace.
    pub max_excess: f64,
}

/// Flags every row where the total Lyapunov value exceeds the exponential
/// envelope by more than the integration budget `eps_int`.
pub fn envelope_monitor(trace: &SimulationTrace, lambda: f64, eps_int: f64) -> EnvelopeReport {
    let Some(first) = trace.records.first() else {
        return EnvelopeReport { bound: vec![], violations: vec![], max_excess: 0.0 };
    };
    let v0 = first.v_total;
    let t0 = first.time;
    let bound: Vec<f64> = trace.records.iter().map(|r| v0 * (-lambda * (r.time - t0)).exp()).collect();
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    for (k, (r, b)) in trace.records.iter().zip(&bound).enumerate() {
        let excess = r.v_total - b;
        max_excess = max_excess.max(excess);
        if excess > eps_int {
            violations.push(k);
        }
    }
    EnvelopeReport { bound, violations, max_excess }
}

/// Integration-error budget from a step-halving study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationBudget {
    /// Largest `|V_dt(t) - V_{dt/2}(t)|` over the shared grid.
    pub max_gap: f64,
    /// First-order error constant `C = 2 max_gap / dt`.
    pub c: f64,
    /// `C dt`.
    pub eps_int: f64,
}

impl IntegrationBudget {
    pub fn from_traces(coarse: &SimulationTrace, fine: &SimulationTrace) -> Result<Self> {
        if fine.records.len() != 2 * coarse.records.len() - 1 {
            return Err(Error::Config("step-halving traces do not share a grid".into()));
        }
        let max_gap = coarse
            .records
            .iter()
            .enumerate()
            .map(|(k, r)| (r.v_total - fine.records[2 * k].v_total).abs())
            .fold(0.0, f64::max);
        let c = 2.0 * max_gap / coarse.dt;
        Ok(Self { max_gap, c, eps_int: c * coarse.dt })
    }
}

/// Runs `config` and the same horizon at half the step, returning both the
/// coarse trace and the calibrated budget.
pub fn calibrate_integration_error<S: Scenario>(
    scenario: &S,
    config: &SimConfig,
) -> Result<(SimulationTrace, IntegrationBudget)> {
    let coarse = run(scenario, config)?;
    let fine_cfg = SimConfig {
        dt: 0.5 * config.dt,
        steps: 2 * config.steps,
        ..config.clone()
    };
    let fine = run(scenario, &fine_cfg)?;
    let budget = IntegrationBudget::from_traces(&coarse, &fine)?;
    Ok((coarse, budget))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_with(values: &[f64], dt: f64, rate: f64) -> SimulationTrace {
        SimulationTrace {
            scenario: "test".into(),
            dt,
            alpha_rate: rate,
            envelope_applies: true,
            runtime_s: 0.0,
            records: values
                .iter()
                .enumerate()
                .map(|(k, &v)| StepRecord {
                    time: k as f64 * dt,
                    positions: vec![vec![0.0]],
                    controls: vec![vec![0.0]],
                    lyapunov: vec![v],
                    v_total: v,
                    barriers: vec![],
                    min_h: None,
                    statuses: vec![QpStatus::Optimal],
                    active_sets: vec![vec![]],
                    residuals: vec![vec![]],
                    auto_slacked: vec![false],
                    switched: false,
                })
                .collect(),
        }
    }

    #[test]
    fn envelope_closed_form() {
        let t = trace_with(&[2.0, 1.0], std::f64::consts::LN_2, 1.0);
        let r = envelope_monitor(&t, 1.0, 0.0);
        assert!((r.bound[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn compliant_trace_has_no_flags() {
        let vals: Vec<f64> = (0..100).map(|k| 3.0 * (-0.011 * k as f64).exp()).collect();
        let r = envelope_monitor(&trace_with(&vals, 0.01, 1.0), 1.0, 0.0);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn excess_beyond_budget_is_flagged() {
        let r = envelope_monitor(&trace_with(&[1.0, 1.0, 1.0], 0.1, 1.0), 1.0, 0.05);
        assert_eq!(r.violations, vec![1, 2]);
    }

    #[test]
    fn csv_header_names_columns() {
        let mut buf = Vec::new();
        trace_with(&[1.0, 0.5], 0.1, 1.0).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x_0_0,u_0_0,V_0,V_total,envelope,min_h,qp_status_0");
        assert_eq!(text.lines().count(), 3);
    }
}
