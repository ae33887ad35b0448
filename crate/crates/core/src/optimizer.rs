//! Two-stage pulse synthesis.
//!
//! Stage 1 searches the bounded, variable-duration piecewise-constant
//! family of [`PulseParams`] with Adam and several seeded restarts. Stage 2
//! resamples the winner onto a fine uniform grid and refines it with a
//! penalty on pulse roughness and power.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{phase_divided_difference, CMat, HermitianEigen, C64, I, ZERO};
use crate::par::{self, ExecMode};
use crate::propagator::{check_segments, BlockUnitary, Cavity, SectorTerms};
use crate::pulse::{default_amplitude_bound, PulseParams, SampledPulse, Segment};
use crate::spec::GateSpec;

/// `|(1/d) Σ_k ⟨t_k|U|s_k⟩|²` over the `d` pairs of `spec`.
pub fn fidelity(u: &BlockUnitary, spec: &GateSpec) -> Result<f64> {
    spec.ensure_valid()?;
    let mut z = ZERO;
    for p in &spec.pairs {
        z += p.target.inner(&u.apply_ket(&p.input)?);
    }
    Ok((z / spec.pairs.len() as f64).norm_sqr())
}

/// The fidelity functional of one spec, precomputed as one overlap matrix
/// `M_K = Σ_k |s_k⟩⟨t_k|` per sector so that `Σ_k ⟨t_k|U|s_k⟩ = Σ_K tr(U_K M_K)`.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    cavity: &'a Cavity,
    overlaps: BTreeMap<usize, CMat>,
    pairs: usize,
}

/// Derivatives of `tr(U M)` on one sector with respect to each segment's
/// drive quadratures and duration.
struct SectorGradient {
    trace: C64,
    d_re: Vec<C64>,
    d_im: Vec<C64>,
    d_sigma: Vec<C64>,
}

fn sector_gradient(terms: &SectorTerms, m: &CMat, segments: &[Segment]) -> SectorGradient {
    let d = terms.dim();
    let s = segments.len();
    let mut eigs = Vec::with_capacity(s);
    let mut props = Vec::with_capacity(s);
    let mut forward = Vec::with_capacity(s + 1);
    forward.push(CMat::identity(d, d));
    for seg in segments {
        let e = HermitianEigen::new(&terms.hamiltonian(seg.amplitude));
        let u = e.propagator(seg.duration);
        let next = &u * forward.last().expect("seeded with identity");
        forward.push(next);
        props.push(u);
        eigs.push(e);
    }
    let trace = crate::linalg::trace_of_product(&forward[s], m);
    let mut d_re = vec![ZERO; s];
    let mut d_im = vec![ZERO; s];
    let mut d_sigma = vec![ZERO; s];
    let mut r = m.clone();
    for l in (0..s).rev() {
        let sigma = segments[l].duration;
        let e = &eigs[l];
        let v = &e.vectors;
        let g = &forward[l] * &r;
        let gt = v.adjoint() * &g * v;
        let phases: Vec<C64> = e.values.iter().map(|&lam| C64::from_polar(1.0, -sigma * lam)).collect();
        let mut omega_t = CMat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let phi = phases[j] * phase_divided_difference(-sigma * (e.values[i] - e.values[j]));
                // store Ωᵀ directly: (Ωᵀ)_ji = Φ_ij G̃_ji
                omega_t[(j, i)] = phi * gt[(j, i)];
            }
        }
        let gamma = v * omega_t * v.adjoint();
        let factor = -I * sigma;
        d_re[l] = factor * terms.x_nonzeros.iter().map(|&(i, j, val)| val * gamma[(j, i)]).sum::<C64>();
        d_im[l] = factor * terms.y_nonzeros.iter().map(|&(i, j, val)| val * gamma[(j, i)]).sum::<C64>();
        d_sigma[l] = (0..d).map(|j| -I * e.values[j] * phases[j] * gt[(j, j)]).sum();
        r *= &props[l];
    }
    SectorGradient { trace, d_re, d_im, d_sigma }
}

/// Raw value and gradients of the coherent overlap `z`, summed over sectors.
struct OverlapGradient {
    z: C64,
    d_re: Vec<C64>,
    d_im: Vec<C64>,
    d_sigma: Vec<C64>,
}

impl<'a> Objective<'a> {
    pub fn new(cavity: &'a Cavity, spec: &GateSpec) -> Result<Self> {
        spec.ensure_valid()?;
        let mut overlaps: BTreeMap<usize, CMat> = BTreeMap::new();
        for p in &spec.pairs {
            for (s, &a) in p.input.terms() {
                let k = s.charge();
                let sec = cavity.sector(k)?;
                let col = sec.basis.binary_search(s).expect("complete basis");
                for (t, &b) in p.target.terms() {
                    if t.charge() != k {
                        continue;
                    }
                    let row = sec.basis.binary_search(t).expect("complete basis");
                    let m = overlaps.entry(k).or_insert_with(|| CMat::zeros(sec.dim(), sec.dim()));
                    // M = Σ |s⟩⟨t|, so tr(U M) = Σ ⟨t|U|s⟩
                    m[(col, row)] += a * b.conj();
                }
            }
        }
        Ok(Self { cavity, overlaps, pairs: spec.pairs.len() })
    }

    pub fn sectors(&self) -> Vec<usize> {
        self.overlaps.keys().copied().collect()
    }

    pub fn fidelity(&self, segments: &[Segment]) -> Result<f64> {
        check_segments(segments)?;
        let mut z = ZERO;
        for (&k, m) in &self.overlaps {
            let u = self.cavity.sector_unitary(k, segments)?;
            z += crate::linalg::trace_of_product(&u, m);
        }
        Ok((z / self.pairs as f64).norm_sqr())
    }

    fn overlap_gradient(&self, segments: &[Segment]) -> OverlapGradient {
        let s = segments.len();
        let mut out = OverlapGradient { z: ZERO, d_re: vec![ZERO; s], d_im: vec![ZERO; s], d_sigma: vec![ZERO; s] };
        let scale = 1.0 / self.pairs as f64;
        for (&k, m) in &self.overlaps {
            let g = sector_gradient(self.cavity.sector(k).expect("checked in new"), m, segments);
            out.z += g.trace * scale;
            for l in 0..s {
                out.d_re[l] += g.d_re[l] * scale;
                out.d_im[l] += g.d_im[l] * scale;
                out.d_sigma[l] += g.d_sigma[l] * scale;
            }
        }
        out
    }

    /// `F` and `∂F/∂(X, P, T)` laid out as in [`PulseParams::to_flat`].
    pub fn value_and_gradient(&self, params: &PulseParams) -> (f64, Vec<f64>) {
        let segments = params.segments();
        let g = self.overlap_gradient(&segments);
        let s = params.len();
        let dfz = |dz: C64| 2.0 * (g.z.conj() * dz).re;
        let mut grad = vec![0.0; 3 * s];
        for l in 0..s {
            grad[l] = dfz(g.d_re[l]) * params.quadrature(params.x[l]).1;
            grad[s + l] = dfz(g.d_im[l]) * params.quadrature(params.p[l]).1;
            grad[2 * s + l] = dfz(g.d_sigma[l]) * params.duration(params.t[l]).1;
        }
        (g.z.norm_sqr(), grad)
    }

    /// `F` and `∂F/∂(Re p_k, Im p_k)` for a fixed-grid pulse, laid out as
    /// all real parts followed by all imaginary parts.
    pub fn sampled_value_and_gradient(&self, pulse: &SampledPulse) -> (f64, Vec<f64>) {
        let segments = pulse.segments();
        let g = self.overlap_gradient(&segments);
        let n = segments.len();
        let mut grad = vec![0.0; 2 * n];
        for k in 0..n {
            grad[k] = 2.0 * (g.z.conj() * g.d_re[k]).re;
            grad[n + k] = 2.0 * (g.z.conj() * g.d_im[k]).re;
        }
        (g.z.norm_sqr(), grad)
    }
}

/// Exact `∂F/∂(X, P, T)`.
pub fn gradient(cavity: &Cavity, params: &PulseParams, spec: &GateSpec) -> Result<Vec<f64>> {
    Ok(Objective::new(cavity, spec)?.value_and_gradient(params).1)
}

/// Adam ascent on a flat parameter vector.
#[derive(Debug, Clone)]
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-12;

    fn new(n: usize, lr: f64) -> Self {
        Self { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn ascend(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            x[i] += self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    /// Minimum number of grid cells.
    pub cells: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda_bandwidth: f64,
    pub lambda_power: f64,
    /// Penalty weights are multiplied by `anneal_factor` every
    /// `anneal_every` iterations.
    pub anneal_every: usize,
    pub anneal_factor: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            cells: 512,
            iterations: 600,
            learning_rate: 2e-3,
            lambda_bandwidth: 1e-3,
            lambda_power: 1e-4,
            anneal_every: 200,
            anneal_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub amplitude_epsilons: Vec<f64>,
    pub time_epsilons: Vec<f64>,
    pub floor: f64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self { amplitude_epsilons: vec![-0.01, 0.01], time_epsilons: vec![-0.01, 0.01], floor: 0.99 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub segments: usize,
    pub delta_tau: f64,
    pub amplitude_bound: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// A synthesized gate counts as successful at or above this fidelity.
    pub target_fidelity: f64,
    /// Stage 1 stops a restart early once it reaches this fidelity.
    pub stop_fidelity: f64,
    pub learning_rate: f64,
    /// Per-iteration multiplicative decay of the stage-1 step size.
    pub lr_decay: f64,
    /// Restarts run in waves of this size; later waves are skipped once a
    /// finished wave holds a pulse at or above `target_fidelity`.
    pub restart_wave: usize,
    /// Spread of the random raw initial quadratures.
    pub init_amplitude: f64,
    pub smoothing: SmoothingConfig,
    pub robustness: RobustnessConfig,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            segments: 60,
            delta_tau: 0.5,
            amplitude_bound: default_amplitude_bound(),
            max_iterations: 2000,
            restarts: 8,
            seed: 0,
            target_fidelity: 0.999,
            stop_fidelity: 0.9999,
            learning_rate: 0.05,
            lr_decay: 0.9985,
            restart_wave: 4,
            init_amplitude: 1.0,
            smoothing: SmoothingConfig::default(),
            robustness: RobustnessConfig::default(),
            exec: ExecMode::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("synthesis config: {what}")));
        if self.segments == 0 {
            return bad("segments must be positive");
        }
        if !(self.delta_tau > 0.0 && self.delta_tau.is_finite()) {
            return bad("delta_tau must be positive");
        }
        if !(self.amplitude_bound > 0.0 && self.amplitude_bound.is_finite()) {
            return bad("amplitude_bound must be positive");
        }
        if self.restarts == 0 || self.restart_wave == 0 {
            return bad("restarts and restart_wave must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0) || !(self.smoothing.learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.target_fidelity) || !(0.0..=1.0).contains(&self.stop_fidelity) {
            return bad("fidelity thresholds must lie in [0, 1]");
        }
        if self.smoothing.cells == 0 || self.smoothing.anneal_every == 0 {
            return bad("smoothing cells and anneal_every must be positive");
        }
        if self.smoothing.lambda_bandwidth < 0.0 || self.smoothing.lambda_power < 0.0 {
            return bad("penalty weights must be non-negative");
        }
        Ok(())
    }

    fn initial_params(&self, restart: usize) -> PulseParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(restart as u64);
        let s = self.segments;
        let a = self.init_amplitude;
        let x = (0..s).map(|_| rng.gen_range(-a..=a)).collect();
        let p = (0..s).map(|_| rng.gen_range(-a..=a)).collect();
        let t = (0..s).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        PulseParams { x, p, t, delta_tau: self.delta_tau, amplitude_bound: self.amplitude_bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub fidelity: f64,
    pub total_duration: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub params: PulseParams,
    pub fidelity: f64,
    /// Fidelity at each iteration of the winning restart.
    pub history: Vec<f64>,
    /// Index of the winning run. With a warm start, index 0 is the warm
    /// start and the random restarts follow.
    pub best_restart: usize,
    pub restarts: Vec<RestartOutcome>,
    pub reached_target: bool,
}

struct RunOutcome {
    params: PulseParams,
    fidelity: f64,
    history: Vec<f64>,
}

fn run_adam(objective: &Objective<'_>, cfg: &SynthesisConfig, start: PulseParams) -> RunOutcome {
    let (dtau, bound) = (start.delta_tau, start.amplitude_bound);
    let mut theta = start.to_flat();
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);
    let mut best = (f64::NEG_INFINITY, theta.clone());
    let mut history = Vec::new();
    for _ in 0..cfg.max_iterations.max(1) {
        let params = PulseParams::from_flat(&theta, dtau, bound);
        let (f, g) = objective.value_and_gradient(&params);
        history.push(f);
        if f > best.0 {
            best = (f, theta.clone());
        }
        if f >= cfg.stop_fidelity {
            break;
        }
        adam.ascend(&mut theta, &g);
        adam.lr *= cfg.lr_decay;
    }
    RunOutcome { params: PulseParams::from_flat(&best.1, dtau, bound), fidelity: best.0, history }
}

/// Stage 1: best-of-restarts Adam search. Restarts run in parallel when
/// `cfg.exec` allows; the winner is the highest fidelity, then the shortest
/// pulse, then the lowest restart index.
pub fn synthesize(cavity: &Cavity, spec: &GateSpec, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    synthesize_from(cavity, spec, cfg, None)
}

/// [`synthesize`] with an optional extra starting point, run before the
/// random restarts.
pub fn synthesize_from(
    cavity: &Cavity,
    spec: &GateSpec,
    cfg: &SynthesisConfig,
    warm_start: Option<&PulseParams>,
) -> Result<SynthesisResult> {
    cfg.validate()?;
    let objective = Objective::new(cavity, spec)?;
    let mut starts: Vec<PulseParams> = warm_start.into_iter().cloned().collect();
    starts.extend((0..cfg.restarts).map(|r| cfg.initial_params(r)));
    let mut runs: Vec<RunOutcome> = Vec::new();
    for wave in starts.chunks(cfg.restart_wave) {
        if runs.iter().any(|r| r.fidelity >= cfg.target_fidelity) {
            break;
        }
        runs.extend(par::map_slice(cfg.exec, wave, |p| run_adam(&objective, cfg, p.clone())));
    }
    let outcomes: Vec<RestartOutcome> = runs
        .iter()
        .map(|r| RestartOutcome {
            fidelity: r.fidelity,
            total_duration: r.params.total_duration(),
            iterations: r.history.len(),
        })
        .collect();
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate().skip(1) {
        let b = &outcomes[best];
        if o.fidelity > b.fidelity || (o.fidelity == b.fidelity && o.total_duration < b.total_duration) {
            best = i;
        }
    }
    let winner = runs.into_iter().nth(best).expect("at least one restart");
    Ok(SynthesisResult {
        reached_target: winner.fidelity >= cfg.target_fidelity,
        params: winner.params,
        fidelity: winner.fidelity,
        history: winner.history,
        best_restart: best,
        restarts: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingResult {
    pub pulse: SampledPulse,
    pub fidelity: f64,
    /// Fidelity of the stage-1 pulse resampled onto the grid, before any
    /// refinement.
    pub resampled_fidelity: f64,
    pub stage1_fidelity: f64,
    /// Set when the smoothed fidelity fell below 0.99.
    pub flagged: bool,
    pub resampled_total_variation: f64,
    pub total_variation: f64,
    pub peak_amplitude: f64,
    pub bandwidth: f64,
    pub history: Vec<f64>,
}

/// Stage 2: refine `params` on a uniform grid of at least
/// `cfg.smoothing.cells` cells, maximizing
/// `F − λ_bw Σ|p_{k+1} − p_k|² − λ_pow Σ|p_k|² dt`.
pub fn smooth(cavity: &Cavity, params: &PulseParams, spec: &GateSpec, cfg: &SynthesisConfig) -> Result<SmoothingResult> {
    cfg.validate()?;
    let sc = &cfg.smoothing;
    let objective = Objective::new(cavity, spec)?;
    let stage1_fidelity = objective.fidelity(&params.segments())?;
    let start = SampledPulse::resample(&params.segments(), sc.cells.max(params.len()))?;
    let n = start.amplitudes.len();
    let dt = start.dt;
    let resampled_fidelity = objective.fidelity(&start.segments())?;

    let mut theta: Vec<f64> = start.amplitudes.iter().map(|z| z.re).chain(start.amplitudes.iter().map(|z| z.im)).collect();
    let to_pulse = |th: &[f64]| SampledPulse {
        dt,
        amplitudes: (0..n).map(|k| C64::new(th[k], th[n + k])).collect(),
    };
    let mut adam = Adam::new(2 * n, sc.learning_rate);
    let (mut lam_bw, mut lam_pow) = (sc.lambda_bandwidth, sc.lambda_power);
    let mut history = Vec::with_capacity(sc.iterations);
    for it in 0..sc.iterations {
        if it > 0 && it % sc.anneal_every == 0 {
            lam_bw *= sc.anneal_factor;
            lam_pow *= sc.anneal_factor;
        }
        let (f, mut g) = objective.sampled_value_and_gradient(&to_pulse(&theta));
        history.push(f);
        for part in 0..2 {
            let v = &theta[part * n..(part + 1) * n];
            let gp = &mut g[part * n..(part + 1) * n];
            for k in 0..n {
                let mut d = -2.0 * lam_pow * v[k] * dt;
                if k > 0 {
                    d -= 2.0 * lam_bw * (v[k] - v[k - 1]);
                }
                if k + 1 < n {
                    d += 2.0 * lam_bw * (v[k + 1] - v[k]);
                }
                gp[k] += d;
            }
        }
        adam.ascend(&mut theta, &g);
    }
    let pulse = SampledPulse::new(dt, to_pulse(&theta).amplitudes)?;
    let fidelity = objective.fidelity(&pulse.segments())?;
    history.push(fidelity);
    Ok(SmoothingResult {
        flagged: fidelity < 0.99,
        fidelity,
        resampled_fidelity,
        stage1_fidelity,
        resampled_total_variation: start.total_variation(),
        total_variation: pulse.total_variation(),
        peak_amplitude: pulse.peak_amplitude(),
        bandwidth: pulse.bandwidth_estimate(),
        pulse,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Amplitude,
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessEntry {
    pub kind: Perturbation,
    pub epsilon: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub nominal: f64,
    pub entries: Vec<RobustnessEntry>,
    pub floor: f64,
    pub passed: bool,
}

/// Fidelity under calibration errors: all amplitudes scaled by `1 + ε`,
/// or all durations scaled by `1 + ε`.
pub fn robustness_check(
    cavity: &Cavity,
    segments: &[Segment],
    spec: &GateSpec,
    cfg: &RobustnessConfig,
) -> Result<RobustnessReport> {
    let objective = Objective::new(cavity, spec)?;
    let nominal = objective.fidelity(segments)?;
    let mut entries = Vec::new();
    for (kind, eps_list) in [(Perturbation::Amplitude, &cfg.amplitude_epsilons), (Perturbation::Time, &cfg.time_epsilons)] {
        for &eps in eps_list {
            let scaled: Vec<Segment> = segments
                .iter()
                .map(|s| match kind {
                    Perturbation::Amplitude => Segment { duration: s.duration, amplitude: s.amplitude * (1.0 + eps) },
                    Perturbation::Time => Segment { duration: s.duration * (1.0 + eps), amplitude: s.amplitude },
                })
                .collect();
            entries.push(RobustnessEntry { kind, epsilon: eps, fidelity: objective.fidelity(&scaled)? });
        }
    }
    let passed = nominal >= cfg.floor && entries.iter().all(|e| e.fidelity >= cfg.floor);
    Ok(RobustnessReport { nominal, entries, floor: cfg.floor, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta_tau: f64,
    pub amplitude_bound: f64,
    pub fidelity: f64,
    pub params: PulseParams,
}

/// Synthesis over a sequence of increasingly relaxed constraint boxes. Each
/// point uses the same seeded restarts and is also warm-started from the
/// previous point's best pulse, which still fits inside the larger box.
/// The box sequence must be non-decreasing in both `delta_tau` and
/// `amplitude_bound`.
pub fn relaxation_sweep(
    cavity: &Cavity,
    spec: &GateSpec,
    cfg: &SynthesisConfig,
    boxes: &[(f64, f64)],
) -> Result<Vec<SweepPoint>> {
    if boxes.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
        return Err(Error::InvalidArgument("constraint boxes must be non-decreasing".into()));
    }
    let mut out: Vec<SweepPoint> = Vec::new();
    for &(delta_tau, amplitude_bound) in boxes {
        let c = SynthesisConfig { delta_tau, amplitude_bound, ..cfg.clone() };
        let warm = match out.last() {
            Some(prev) => Some(PulseParams::from_segments(&prev.params.segments(), delta_tau, amplitude_bound)?),
            None => None,
        };
        let r = synthesize_from(cavity, spec, &c, warm.as_ref())?;
        out.push(SweepPoint { delta_tau, amplitude_bound, fidelity: r.fidelity, params: r.params });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockState;
    use crate::spec::Ket;

    fn fs(a: u32, b: u32, c: u32) -> FockState {
        FockState::new(a, b, c)
    }

    fn entangler() -> GateSpec {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        GateSpec::new(
            "entangler",
            "",
            vec![
                (Ket::basis(fs(0, 1, 1)), Ket::basis(fs(0, 1, 1))),
                (Ket::basis(fs(0, 2, 0)), Ket::from_terms([(fs(0, 2, 0), C64::new(h, 0.0)), (fs(0, 0, 2), C64::new(h, 0.0))])),
            ],
        )
    }

    fn random_params(rng: &mut ChaCha8Rng, s: usize) -> PulseParams {
        let mut v = |lo: f64, hi: f64| (0..s).map(|_| rng.gen_range(lo..hi)).collect::<Vec<_>>();
        let x = v(-2.0, 2.0);
        let p = v(-2.0, 2.0);
        let t = v(-2.0, 2.0);
        PulseParams { x, p, t, delta_tau: 0.5, amplitude_bound: 1.3 }
    }

    #[test]
    fn identity_fidelities() {
        let cav = Cavity::new(4);
        let id = BlockUnitary::identity(&[0, 1, 2, 3, 4]);
        let spec = GateSpec::from_basis_pairs("id", "", &[(fs(0, 2, 0), 1.0, fs(0, 2, 0)), (fs(0, 1, 1), 1.0, fs(0, 1, 1))]);
        assert!((fidelity(&id, &spec).unwrap() - 1.0).abs() < 1e-15);
        let mut pairs = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let sign = if a + b + c == 3 { -1.0 } else { 1.0 };
                    pairs.push((fs(a, b, c), sign, fs(a, b, c)));
                }
            }
        }
        let toffoli = GateSpec::from_basis_pairs("t", "", &pairs);
        assert!((fidelity(&id, &toffoli).unwrap() - 0.5625).abs() < 1e-15);
        let obj = Objective::new(&cav, &toffoli).unwrap();
        assert!((obj.fidelity(&[]).unwrap() - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn objective_matches_direct_fidelity() {
        let cav = Cavity::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = random_params(&mut rng, 6);
        let spec = entangler();
        let u = cav.full_unitary(&params.segments()).unwrap();
        let direct = fidelity(&u, &spec).unwrap();
        let (f, _) = Objective::new(&cav, &spec).unwrap().value_and_gradient(&params);
        assert!((direct - f).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cav = Cavity::new(4);
        let spec = entangler();
        let obj = Objective::new(&cav, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = random_params(&mut rng, 5);
        let (_, g) = obj.value_and_gradient(&params);
        let theta = params.to_flat();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            let fa = obj.value_and_gradient(&PulseParams::from_flat(&a, 0.5, 1.3)).0;
            let fb = obj.value_and_gradient(&PulseParams::from_flat(&b, 0.5, 1.3)).0;
            let fd = (fa - fb) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + g[i].abs()), "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn sampled_gradient_matches_finite_differences() {
        let cav = Cavity::new(2);
        let obj = Objective::new(&cav, &entangler()).unwrap();
        let pulse = SampledPulse::new(0.3, vec![C64::new(0.4, -0.2), C64::new(1.0, 0.3), C64::new(-0.5, 0.8)]).unwrap();
        let (_, g) = obj.sampled_value_and_gradient(&pulse);
        let h = 1e-6;
        for i in 0..6 {
            let bump = |sgn: f64| {
                let mut p = pulse.clone();
                let (k, im) = (i % 3, i >= 3);
                p.amplitudes[k] += if im { C64::new(0.0, sgn * h) } else { C64::new(sgn * h, 0.0) };
                obj.fidelity(&p.segments()).unwrap()
            };
            let fd = (bump(1.0) - bump(-1.0)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn saturated_duration_has_vanishing_gradient() {
        let cav = Cavity::new(2);
        let obj = Objective::new(&cav, &entangler()).unwrap();
        let mut params = PulseParams { x: vec![0.5, 1.0], p: vec![0.2, -0.3], t: vec![0.0, 0.0], delta_tau: 1.0, amplitude_bound: 1.0 };
        let mut last = f64::INFINITY;
        for t in [-5.0, -10.0, -20.0, -40.0] {
            params.t[1] = t;
            let g = obj.value_and_gradient(&params).1[5].abs();
            assert!(g <= last);
            last = g;
        }
        assert!(last < 1e-15);
    }

    #[test]
    fn identity_spec_converges_quickly() {
        let cav = Cavity::new(2);
        let spec = GateSpec::from_basis_pairs(
            "id",
            "",
            &[(fs(0, 0, 0), 1.0, fs(0, 0, 0)), (fs(0, 1, 0), 1.0, fs(0, 1, 0)), (fs(0, 2, 0), 1.0, fs(0, 2, 0)), (fs(1, 0, 0), 1.0, fs(1, 0, 0))],
        );
        let cfg = SynthesisConfig { segments: 4, restarts: 2, max_iterations: 100, learning_rate: 1.0, stop_fidelity: 1.0 - 1e-6, ..Default::default() };
        let r = synthesize(&cav, &spec, &cfg).unwrap();
        assert!(r.fidelity >= 1.0 - 1e-6, "{}", r.fidelity);
        assert!(r.history.len() <= 100);
    }

    #[test]
    fn synthesis_is_deterministic_across_exec_modes() {
        let cav = Cavity::new(2);
        let base = SynthesisConfig { segments: 6, restarts: 3, max_iterations: 30, seed: 9, ..Default::default() };
        let a = synthesize(&cav, &entangler(), &SynthesisConfig { exec: ExecMode::Sequential, ..base.clone() }).unwrap();
        let b = synthesize(&cav, &entangler(), &SynthesisConfig { exec: ExecMode::Parallel, ..base }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn robustness_at_zero_epsilon_is_nominal() {
        let cav = Cavity::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let segs = random_params(&mut rng, 4).segments();
        let cfg = RobustnessConfig { amplitude_epsilons: vec![0.0], time_epsilons: vec![0.0], floor: 0.0 };
        let r = robustness_check(&cav, &segs, &entangler(), &cfg).unwrap();
        assert!(r.entries.iter().all(|e| e.fidelity == r.nominal));
    }

    #[test]
    fn invalid_specs_are_rejected_before_search() {
        let cav = Cavity::new(4);
        let bad = GateSpec::from_basis_pairs("bad", "", &[(fs(0, 4, 0), 1.0, fs(1, 0, 0))]);
        assert!(synthesize(&cav, &bad, &SynthesisConfig::default()).is_err());
        assert!(fidelity(&BlockUnitary::identity(&[2, 4]), &bad).is_err());
    }
}
