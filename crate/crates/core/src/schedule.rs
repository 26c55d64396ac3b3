//! Time-dependent drives `W(t)` acting on the system factor.
//!
//! Drives are specified through single-particle matrices on the system
//! modes (every drive used here is gauge invariant by construction) and a
//! closed-form ramp profile φ with φ(0) = 0, φ(x ≥ 1) = 1 and vanishing
//! endpoint derivatives, so `W(t)` is twice continuously differentiable.

use crate::error::{CoreError, Result};
use crate::linalg::{max_abs, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Stepwise,
    Staircase,
}

/// Ramp profile on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampProfile {
    /// `10x³ − 15x⁴ + 6x⁵`: zero first and second derivatives at both ends.
    QuinticSmoothstep,
}

impl RampProfile {
    pub fn phi(&self, x: f64) -> f64 {
        match self {
            RampProfile::QuinticSmoothstep => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
                }
            }
        }
    }

    pub fn dphi(&self, x: f64) -> f64 {
        match self {
            RampProfile::QuinticSmoothstep => {
                if x <= 0.0 || x >= 1.0 {
                    0.0
                } else {
                    30.0 * x * x * (1.0 - x) * (1.0 - x)
                }
            }
        }
    }
}

/// A segment of the drive: either a ramp (time dependent) or a wait
/// (constant drive), with the step index it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub step: usize,
    pub is_ramp: bool,
}

/// Piecewise drive from `W_0` to `W_f`, either in one ramp (stepwise) or in
/// `N` equal sub-steps separated by waits (staircase):
/// `W(t) = W_0 + (j−1+φ(t−T̃_{j−1}))·(W_f−W_0)/N` on the j-th step.
#[derive(Debug, Clone)]
pub struct DriveSchedule {
    pub kind: ScheduleKind,
    /// Single-particle drive matrices on the system modes.
    pub w0: CMat,
    pub wf: CMat,
    /// Ramp duration.
    pub t0: f64,
    pub ramp: RampProfile,
    /// Step count (1 for stepwise).
    pub steps: usize,
    /// Total duration `T_j` of each step (ramp included).
    pub waits: Vec<f64>,
}

impl DriveSchedule {
    pub fn stepwise(w0: CMat, wf: CMat, t0: f64, total: f64) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::Stepwise,
            w0,
            wf,
            t0,
            ramp: RampProfile::QuinticSmoothstep,
            steps: 1,
            waits: vec![total],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn staircase(w0: CMat, wf: CMat, t0: f64, steps: usize, waits: Vec<f64>) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::Staircase,
            w0,
            wf,
            t0,
            ramp: RampProfile::QuinticSmoothstep,
            steps,
            waits,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w0.dim() != self.wf.dim() || self.w0.nrows() != self.w0.ncols() {
            return Err(CoreError::Dimension("W_0 and W_f must be square and same size".into()));
        }
        if !(self.t0 > 0.0) {
            return Err(CoreError::Parameter("ramp duration t0 must be positive".into()));
        }
        if self.steps == 0 || self.waits.len() != self.steps {
            return Err(CoreError::Parameter(format!(
                "need one wait per step: steps = {}, waits = {}",
                self.steps,
                self.waits.len()
            )));
        }
        if self.waits.iter().any(|&w| w < self.t0) {
            return Err(CoreError::Parameter(
                "each step must be at least as long as the ramp duration t0".into(),
            ));
        }
        // Drives must be Hermitian single-particle blocks.
        let herm = |m: &CMat| {
            let d = crate::linalg::dagger(m);
            crate::linalg::max_abs_diff(m, &d) <= 1e-12 * max_abs(m).max(1.0)
        };
        if !herm(&self.w0) || !herm(&self.wf) {
            return Err(CoreError::structural("drive matrices must be Hermitian"));
        }
        Ok(())
    }

    pub fn n_system_modes(&self) -> usize {
        self.w0.nrows()
    }

    /// `ΔW = (W_f − W_0)/N` as a single-particle matrix.
    pub fn delta_w(&self) -> CMat {
        (&self.wf - &self.w0).mapv(|x| x / C64::new(self.steps as f64, 0.0))
    }

    /// Drive value after step `j` has completed (`j = 0` is the initial
    /// drive, `j = N` the final one).
    pub fn w_level(&self, j: usize) -> CMat {
        &self.w0 + &self.delta_w().mapv(|x| x * C64::new(j as f64, 0.0))
    }

    /// Cumulative step boundaries `T̃_j`.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for &w in &self.waits {
            acc += w;
            out.push(acc);
        }
        out
    }

    pub fn total_time(&self) -> f64 {
        self.waits.iter().sum()
    }

    /// Ramp/wait segmentation in time order.
    pub fn segments(&self) -> Vec<Segment> {
        let bounds = self.boundaries();
        let mut out = Vec::with_capacity(2 * self.steps);
        for j in 0..self.steps {
            let s = bounds[j];
            out.push(Segment { start: s, end: s + self.t0, step: j, is_ramp: true });
            if bounds[j + 1] > s + self.t0 {
                out.push(Segment { start: s + self.t0, end: bounds[j + 1], step: j, is_ramp: false });
            }
        }
        out
    }

    /// Single-particle `w(t)`.
    pub fn w_at(&self, t: f64) -> CMat {
        let (level, x) = self.progress(t);
        let amp = level + self.ramp.phi(x);
        &self.w0 + &self.delta_w().mapv(|v| v * C64::new(amp, 0.0))
    }

    /// Single-particle `dw/dt` (closed form from the ramp profile).
    pub fn dw_dt(&self, t: f64) -> CMat {
        let (_, x) = self.progress(t);
        let rate = self.ramp.dphi(x) / self.t0;
        self.delta_w().mapv(|v| v * C64::new(rate, 0.0))
    }

    /// Decomposes `t` into (completed steps, ramp progress within the
    /// current step).
    fn progress(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (0.0, 0.0);
        }
        let bounds = self.boundaries();
        if t >= *bounds.last().unwrap() {
            return ((self.steps - 1) as f64, 1.0);
        }
        let j = match bounds.windows(2).position(|w| t >= w[0] && t < w[1]) {
            Some(j) => j,
            None => self.steps - 1,
        };
        (j as f64, (t - bounds[j]) / self.t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use ndarray::array;

    fn level(e: f64) -> CMat {
        array![[C64::new(e, 0.0)]]
    }

    #[test]
    fn quintic_profile_endpoints() {
        let p = RampProfile::QuinticSmoothstep;
        assert_eq!(p.phi(0.0), 0.0);
        assert_eq!(p.phi(1.0), 1.0);
        assert_eq!(p.dphi(0.0), 0.0);
        assert_eq!(p.dphi(1.0), 0.0);
        // φ' matches a finite difference in the interior.
        let x = 0.37;
        let fd = (p.phi(x + 1e-6) - p.phi(x - 1e-6)) / 2e-6;
        assert!((p.dphi(x) - fd).abs() < 1e-8);
    }

    #[test]
    fn stepwise_drive_values() {
        let s = DriveSchedule::stepwise(level(0.0), level(1.0), 0.5, 4.0).unwrap();
        assert_eq!(s.w_at(-1.0)[[0, 0]].re, 0.0);
        assert_eq!(s.w_at(0.25)[[0, 0]].re, RampProfile::QuinticSmoothstep.phi(0.5));
        assert_eq!(s.w_at(3.0)[[0, 0]].re, 1.0);
        assert_eq!(s.dw_dt(3.0)[[0, 0]].re, 0.0);
    }

    #[test]
    fn staircase_matches_piecewise_form() {
        let (w0, wf) = (level(0.2), level(1.2));
        let n = 4;
        let waits = vec![1.0; n];
        let s = DriveSchedule::staircase(w0.clone(), wf.clone(), 0.25, n, waits).unwrap();
        let phi = |x: f64| RampProfile::QuinticSmoothstep.phi(x);
        // W(t) = W0 + (j−1+φ(t−T̃_{j−1}))·ΔW on [T̃_{j−1}, T̃_j] (1-based j).
        for &t in &[0.05f64, 0.1, 0.9, 1.1, 1.2, 2.5, 3.05, 3.9] {
            let j = (t / 1.0).floor().min((n - 1) as f64);
            let expected = 0.2 + (j + phi((t - j) / 0.25)) * (1.2 - 0.2) / n as f64;
            assert!(
                (s.w_at(t)[[0, 0]].re - expected).abs() < 1e-12,
                "t = {t}: {} vs {expected}",
                s.w_at(t)[[0, 0]].re
            );
        }
        // Levels land exactly on W_j at step boundaries.
        for j in 0..=n {
            let lv = s.w_level(j);
            let expected = 0.2 + j as f64 * (1.2 - 0.2) / n as f64;
            assert!(max_abs_diff(&lv, &level(expected)) < 1e-12);
        }
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(DriveSchedule::stepwise(level(0.0), level(1.0), 0.0, 1.0).is_err());
        assert!(DriveSchedule::staircase(level(0.0), level(1.0), 0.5, 2, vec![0.4, 1.0]).is_err());
        assert!(DriveSchedule::staircase(level(0.0), level(1.0), 0.5, 2, vec![1.0]).is_err());
    }
}
