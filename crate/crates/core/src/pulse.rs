//! Control-pulse representations.
//!
//! A [`PulseParams`] is the unconstrained optimizer parameterization: each
//! segment's drive quadratures pass through a scaled arctangent and its
//! duration through a sigmoid, so every real parameter vector maps to a
//! physical pulse. A [`SampledPulse`] is the uniform fine-grid form used
//! by the smoothing stage. Both lower to a list of [`Segment`]s.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Constant drive `amplitude` held for `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub amplitude: C64,
}

pub fn total_duration(segments: &[Segment]) -> f64 {
    segments.iter().map(|s| s.duration).sum()
}

pub fn concat(first: &[Segment], second: &[Segment]) -> Vec<Segment> {
    first.iter().chain(second).copied().collect()
}

/// `(0, 1)`-valued logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Piecewise-constant pulse with variable segment durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub t: Vec<f64>,
    /// Largest duration a single segment can take.
    pub delta_tau: f64,
    /// Each drive quadrature lies in `(-amplitude_bound, amplitude_bound)`.
    /// `π/2` reproduces a bare arctangent.
    #[serde(default = "default_amplitude_bound")]
    pub amplitude_bound: f64,
}

pub fn default_amplitude_bound() -> f64 {
    FRAC_PI_2
}

impl PulseParams {
    pub fn new(x: Vec<f64>, p: Vec<f64>, t: Vec<f64>, delta_tau: f64, amplitude_bound: f64) -> Result<Self> {
        if x.len() != p.len() || x.len() != t.len() {
            return Err(Error::InvalidArgument("X, P, T must have equal length".into()));
        }
        if !(delta_tau > 0.0 && delta_tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta_tau must be positive, got {delta_tau}")));
        }
        if !(amplitude_bound > 0.0 && amplitude_bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "amplitude bound must be positive, got {amplitude_bound}"
            )));
        }
        if x.iter().chain(&p).chain(&t).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pulse parameters must be finite".into()));
        }
        Ok(Self { x, p, t, delta_tau, amplitude_bound })
    }

    /// Parameters from a flat `[X.., P.., T..]` vector.
    pub fn from_flat(v: &[f64], delta_tau: f64, amplitude_bound: f64) -> Self {
        let s = v.len() / 3;
        Self {
            x: v[..s].to_vec(),
            p: v[s..2 * s].to_vec(),
            t: v[2 * s..3 * s].to_vec(),
            delta_tau,
            amplitude_bound,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.x.iter().chain(&self.p).chain(&self.t).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn quadrature_scale(&self) -> f64 {
        self.amplitude_bound / FRAC_PI_2
    }

    /// Bounded quadrature for one raw parameter, and its derivative.
    pub fn quadrature(&self, raw: f64) -> (f64, f64) {
        let k = self.quadrature_scale();
        (k * raw.atan(), k / (1.0 + raw * raw))
    }

    /// Segment duration for one raw parameter, and its derivative.
    pub fn duration(&self, raw: f64) -> (f64, f64) {
        let s = sigmoid(raw);
        (self.delta_tau * s, self.delta_tau * s * (1.0 - s))
    }

    pub fn amplitude(&self, l: usize) -> C64 {
        C64::new(self.quadrature(self.x[l]).0, self.quadrature(self.p[l]).0)
    }

    pub fn segments(&self) -> Vec<Segment> {
        (0..self.len())
            .map(|l| Segment { duration: self.duration(self.t[l]).0, amplitude: self.amplitude(l) })
            .collect()
    }

    pub fn total_duration(&self) -> f64 {
        self.t.iter().map(|&t| self.duration(t).0).sum()
    }

    /// Raw parameters that reproduce `segments` under new bounds. Fails if
    /// a segment does not fit strictly inside the new boxes.
    pub fn from_segments(segments: &[Segment], delta_tau: f64, amplitude_bound: f64) -> Result<Self> {
        let k = amplitude_bound / FRAC_PI_2;
        let inv_q = |v: f64| -> Result<f64> {
            let r = v / k;
            if r.abs() >= FRAC_PI_2 {
                return Err(Error::InvalidArgument(format!(
                    "quadrature {v} outside (-{amplitude_bound}, {amplitude_bound})"
                )));
            }
            Ok(r.tan())
        };
        let inv_t = |d: f64| -> Result<f64> {
            let r = d / delta_tau;
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidArgument(format!("duration {d} outside (0, {delta_tau})")));
            }
            Ok((r / (1.0 - r)).ln())
        };
        let mut x = Vec::new();
        let mut p = Vec::new();
        let mut t = Vec::new();
        for s in segments {
            x.push(inv_q(s.amplitude.re)?);
            p.push(inv_q(s.amplitude.im)?);
            t.push(inv_t(s.duration)?);
        }
        Self::new(x, p, t, delta_tau, amplitude_bound)
    }
}

/// Uniform-grid pulse: cell `k` holds `amplitudes[k]` on `[k·dt, (k+1)·dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPulse {
    pub dt: f64,
    pub amplitudes: Vec<C64>,
}

impl SampledPulse {
    pub fn new(dt: f64, amplitudes: Vec<C64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid step must be positive, got {dt}")));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("amplitudes must be finite".into()));
        }
        Ok(Self { dt, amplitudes })
    }

    pub fn total_duration(&self) -> f64 {
        self.dt * self.amplitudes.len() as f64
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.amplitudes.iter().map(|&a| Segment { duration: self.dt, amplitude: a }).collect()
    }

    /// Zero-order-hold resampling of `segments` onto `cells` uniform cells,
    /// each cell taking the time average of the drive it covers.
    pub fn resample(segments: &[Segment], cells: usize) -> Result<Self> {
        let total = total_duration(segments);
        if cells == 0 || total <= 0.0 {
            return Err(Error::InvalidArgument("resampling needs a positive duration and cell count".into()));
        }
        let dt = total / cells as f64;
        let mut out = vec![C64::new(0.0, 0.0); cells];
        let mut start = 0.0;
        for seg in segments {
            let end = start + seg.duration;
            let first = ((start / dt).floor() as usize).min(cells - 1);
            let last = (((end / dt).ceil() as usize).max(first + 1)).min(cells);
            for (k, cell) in out.iter_mut().enumerate().take(last).skip(first) {
                let lo = (k as f64 * dt).max(start);
                let hi = ((k + 1) as f64 * dt).min(end);
                if hi > lo {
                    *cell += seg.amplitude * ((hi - lo) / dt);
                }
            }
            start = end;
        }
        Self::new(dt, out)
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Σ |p_{k+1} − p_k|`.
    pub fn total_variation(&self) -> f64 {
        self.amplitudes.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// RMS rate of change of the drive, `sqrt(Σ|Δp|² / (n·dt²))`, used as a
    /// bandwidth estimate in units of χ.
    pub fn bandwidth_estimate(&self) -> f64 {
        let n = self.amplitudes.len();
        if n < 2 {
            return 0.0;
        }
        let s: f64 = self.amplitudes.windows(2).map(|w| (w[1] - w[0]).norm_sqr()).sum();
        (s / ((n - 1) as f64 * self.dt * self.dt)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn resample_preserves_pulse_area() {
        let segs = vec![
            Segment { duration: 0.3, amplitude: C64::new(1.0, 0.0) },
            Segment { duration: 0.45, amplitude: C64::new(-0.5, 0.2) },
            Segment { duration: 0.25, amplitude: C64::new(0.0, 1.0) },
        ];
        let area: C64 = segs.iter().map(|s| s.amplitude * s.duration).sum();
        let sp = SampledPulse::resample(&segs, 7).unwrap();
        let sampled: C64 = sp.amplitudes.iter().map(|a| a * sp.dt).sum();
        assert!((area - sampled).norm() < 1e-12);
        assert!((sp.total_duration() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_segments_inverts_segments() {
        let params = PulseParams::new(vec![0.3, -2.0], vec![1.5, 0.0], vec![0.1, -1.0], 0.7, 1.0).unwrap();
        let back = PulseParams::from_segments(&params.segments(), 0.7, 1.0).unwrap();
        for (a, b) in params.to_flat().iter().zip(back.to_flat()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn derived_values_stay_inside_boxes(
            raw in proptest::collection::vec(-1e6f64..1e6, 3),
            bound in 0.1f64..5.0,
            dtau in 0.01f64..3.0,
        ) {
            let p = PulseParams::new(vec![raw[0]], vec![raw[1]], vec![raw[2].clamp(-30.0, 30.0)], dtau, bound).unwrap();
            let seg = p.segments()[0];
            prop_assert!(seg.amplitude.re.abs() < bound);
            prop_assert!(seg.amplitude.im.abs() < bound);
            prop_assert!(seg.duration > 0.0 && seg.duration < dtau);
            prop_assert!(seg.amplitude.re.is_finite() && seg.amplitude.im.is_finite());
        }
    }
}
