use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use trimode::fock::{enumerate_sector, ChargeSector};
use trimode::gates::{gate_by_name, synthesis_defaults};
use trimode::hardware::{self, parse_quantity, Dimension, FomReport, HardwareParams};
use trimode::io::{read_pulse_csv, stage1_csv, stage2_csv};
use trimode::optimizer::{
    robustness_check, smooth, synthesize, RobustnessReport, RestartOutcome, SynthesisConfig,
};
use trimode::qec::{
    break_even, correction_plan, lifetime_sweep, roundtrip_trials, GateProvider,
    IdealGates, LifetimeRow, PulseGates, RecoveryChannel, RoundtripReport, LIFETIME_MODEL,
};
use trimode::spec::{parse_triple_key, validate_spec};
use trimode::{Cavity, GateSpec, Ket, PulseParams, StateVector, DRIVE_CONVENTION};

use crate::artifact::{Meta, OutDir};
use crate::config::{self, FomSection, RunConfig};
use crate::{Cli, Command, Outcome, QecExperiment, Scenario};

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: RunConfig,
}

impl Ctx<'_> {
    fn seed(&self) -> Option<u64> {
        self.cli.seed.or(self.cfg.seed)
    }

    fn out(&self) -> anyhow::Result<OutDir> {
        let root = match (&self.cli.out, &self.cfg.out) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => config::relative_to(self.cli.config.as_deref(), p),
            (None, None) => PathBuf::from("out"),
        };
        OutDir::create(&root)
    }

    fn path(&self, p: &Path) -> PathBuf {
        config::relative_to(self.cli.config.as_deref(), p)
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let cfg = config::load(cli.config.as_deref())?;
    let ctx = Ctx { cli, cfg };
    match &cli.command {
        Command::Sectors { k_max, json } => sectors(&ctx, *k_max, *json),
        Command::Synthesize { gate, spec } => synthesize_cmd(&ctx, gate.as_deref(), spec.as_deref()),
        Command::Simulate { pulse, state, record_every } => {
            simulate(&ctx, pulse.as_deref(), state.as_deref(), *record_every)
        }
        Command::Qec { experiment: QecExperiment::Roundtrip, trials } => roundtrip(&ctx, *trials),
        Command::Qec { experiment: QecExperiment::Lifetime, .. } => lifetime(&ctx),
        Command::Fom { scenario } => fom(&ctx, *scenario),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorsReport {
    pub meta: Meta,
    pub k_max: usize,
    pub sectors: Vec<ChargeSector>,
}

fn sectors(ctx: &Ctx, k_max: Option<usize>, as_json: bool) -> anyhow::Result<Outcome> {
    let k_max = k_max
        .or(ctx.cfg.sectors.as_ref().map(|s| s.k_max))
        .ok_or_else(|| anyhow!("give --k-max or [sectors] k_max"))?;
    let sectors = (0..=k_max).map(|k| enumerate_sector(k as i64)).collect::<Result<Vec<_>, _>>()?;
    let report = SectorsReport { meta: Meta::new("sectors", &json!({ "k_max": k_max })), k_max, sectors };
    if as_json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for s in &report.sectors {
            let basis: Vec<String> = s.basis.iter().map(|b| b.to_string()).collect();
            println!("K={} dim={}: {}", s.charge, s.dim(), basis.join(" "));
        }
    }
    if ctx.cli.out.is_some() || ctx.cfg.out.is_some() {
        ctx.out()?.write_json("sectors.json", &report)?;
    }
    Ok(Outcome::Done)
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Debug, Serialize)]
struct StageOneSummary {
    fidelity: f64,
    reached_target: bool,
    best_restart: usize,
    restarts: Vec<RestartOutcome>,
    total_duration: f64,
    params: PulseParams,
    history: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct StageTwoSummary {
    fidelity: f64,
    resampled_fidelity: f64,
    flagged: bool,
    cells: usize,
    dt: f64,
    resampled_total_variation: f64,
    total_variation: f64,
    peak_amplitude: f64,
    bandwidth: f64,
    history: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SynthesisArtifact {
    meta: Meta,
    gate: String,
    drive_convention: &'static str,
    spec: GateSpec,
    config: SynthesisConfig,
    target_fidelity: f64,
    final_fidelity: f64,
    reached_target: bool,
    stage1: StageOneSummary,
    stage2: StageTwoSummary,
    robustness: RobustnessReport,
}

fn synthesize_cmd(ctx: &Ctx, gate: Option<&str>, spec_path: Option<&Path>) -> anyhow::Result<Outcome> {
    let section = ctx.cfg.synthesize.clone().unwrap_or_default();
    let spec = match (gate, spec_path, &section.gate, &section.spec) {
        (Some(g), _, _, _) => gate_by_name(g)?,
        (None, Some(p), _, _) => read_spec(p)?,
        (None, None, Some(g), _) => gate_by_name(g)?,
        (None, None, None, Some(p)) => read_spec(&ctx.path(p))?,
        _ => bail!("give --gate NAME or --spec FILE"),
    };
    let report = validate_spec(&spec);
    if !report.is_valid() {
        bail!("spec `{}` is invalid: {report}", spec.name);
    }
    let mut base = serde_json::to_value(synthesis_defaults(&spec.name))?;
    if let Some(overrides) = section.synthesis {
        merge(&mut base, serde_json::to_value(overrides)?);
    }
    let mut cfg: SynthesisConfig =
        serde_json::from_value(base).context("[synthesize.synthesis] does not match the synthesis settings")?;
    if let Some(seed) = ctx.seed() {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let meta = Meta::new("synthesize", &json!({ "spec": &spec, "synthesis": &cfg }));

    let cavity = Cavity::new(spec.max_charge());
    let stage1 = synthesize(&cavity, &spec, &cfg)?;
    eprintln!(
        "{}: stage 1 F = {:.6} after {} restart(s)",
        spec.name,
        stage1.fidelity,
        stage1.restarts.len()
    );
    let stage2 = smooth(&cavity, &stage1.params, &spec, &cfg)?;
    eprintln!("{}: stage 2 F = {:.6}", spec.name, stage2.fidelity);
    let robustness = robustness_check(&cavity, &stage2.pulse.segments(), &spec, &cfg.robustness)?;

    let out = ctx.out()?;
    let csv_meta: Vec<(&str, String)> = meta.pairs();
    let csv_meta: Vec<(&str, &str)> = csv_meta.iter().map(|(k, v)| (*k, v.as_str())).collect();
    out.write(&format!("{}_stage1.csv", spec.name), &stage1_csv(&stage1.params.segments(), &csv_meta))?;
    out.write(&format!("{}_stage2.csv", spec.name), &stage2_csv(&stage2.pulse, &csv_meta))?;
    let reached = stage2.fidelity >= cfg.target_fidelity;
    let artifact = SynthesisArtifact {
        meta,
        gate: spec.name.clone(),
        drive_convention: DRIVE_CONVENTION,
        target_fidelity: cfg.target_fidelity,
        final_fidelity: stage2.fidelity,
        reached_target: reached,
        stage1: StageOneSummary {
            fidelity: stage1.fidelity,
            reached_target: stage1.reached_target,
            best_restart: stage1.best_restart,
            restarts: stage1.restarts.clone(),
            total_duration: stage1.params.total_duration(),
            history: stage1.history.clone(),
            params: stage1.params.clone(),
        },
        stage2: StageTwoSummary {
            fidelity: stage2.fidelity,
            resampled_fidelity: stage2.resampled_fidelity,
            flagged: stage2.flagged,
            cells: stage2.pulse.amplitudes.len(),
            dt: stage2.pulse.dt,
            resampled_total_variation: stage2.resampled_total_variation,
            total_variation: stage2.total_variation,
            peak_amplitude: stage2.peak_amplitude,
            bandwidth: stage2.bandwidth,
            history: stage2.history.clone(),
        },
        robustness,
        spec: spec.clone(),
        config: cfg.clone(),
    };
    out.write_json(&format!("{}_result.json", spec.name), &artifact)?;
    println!("{} F = {:.6} (target {})", spec.name, stage2.fidelity, cfg.target_fidelity);
    if reached {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::TargetMissed(format!("{} reached F = {:.6} < {}", spec.name, stage2.fidelity, cfg.target_fidelity)))
    }
}

fn read_spec(path: &Path) -> anyhow::Result<GateSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GateSpec::from_json(&text).with_context(|| format!("parsing spec {}", path.display()))
}

#[derive(Debug, Serialize)]
struct SimulationArtifact {
    meta: Meta,
    drive_convention: &'static str,
    initial: Ket,
    final_state: Ket,
    final_populations: [f64; 3],
    charge_drift: f64,
    duration: f64,
}

fn simulate(ctx: &Ctx, pulse: Option<&Path>, state: Option<&str>, record_every: Option<f64>) -> anyhow::Result<Outcome> {
    let section = ctx.cfg.simulate.clone().unwrap_or_default();
    let pulse_path = match (pulse, &section.pulse) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => ctx.path(p),
        _ => bail!("give --pulse FILE"),
    };
    let text = std::fs::read_to_string(&pulse_path).with_context(|| format!("reading {}", pulse_path.display()))?;
    let segments = read_pulse_csv(&text).with_context(|| format!("pulse file {}", pulse_path.display()))?;
    let initial = match (state, &section.state, &section.superposition) {
        (Some(s), _, _) => Ket::basis(parse_triple_key(s)?),
        (None, Some(s), _) => Ket::basis(parse_triple_key(s)?),
        (None, None, Some(k)) => k.clone(),
        _ => bail!("give --state n_a,n_b,n_c"),
    };
    let norm = initial.norm();
    if (norm - 1.0).abs() > 1e-9 {
        bail!("initial state has norm {norm}, expected 1");
    }
    let record_every = record_every.or(section.record_every);
    let meta = Meta::new(
        "simulate",
        &json!({ "segments": &segments, "initial": &initial, "record_every": record_every }),
    );
    let cavity = Cavity::new(initial.max_charge());
    let (fin, traj) = cavity.propagate(&segments, &StateVector::from_ket(&initial)?, record_every)?;
    let out = ctx.out()?;
    out.write("trajectory.csv", &format!("{}{}", meta.csv_lines(), traj.to_csv()))?;
    let artifact = SimulationArtifact {
        meta,
        drive_convention: DRIVE_CONVENTION,
        initial,
        final_state: fin.to_ket(),
        final_populations: fin.populations(),
        charge_drift: traj.charge_drift(),
        duration: trimode::pulse::total_duration(&segments),
    };
    out.write_json("simulation.json", &artifact)?;
    let [a, b, c] = artifact.final_populations;
    println!("final populations n_a={a:.6} n_b={b:.6} n_c={c:.6}");
    Ok(Outcome::Done)
}

#[derive(Debug, Serialize)]
struct RoundtripArtifact {
    meta: Meta,
    mode: &'static str,
    floor: f64,
    passed: bool,
    report: RoundtripReport,
}

fn roundtrip(ctx: &Ctx, trials: Option<usize>) -> anyhow::Result<Outcome> {
    let section = ctx.cfg.qec.as_ref().and_then(|q| q.roundtrip.clone()).unwrap_or_default();
    let trials = trials.unwrap_or(section.trials);
    let seed = ctx.seed().unwrap_or(0);
    let (gates, mode, pulses): (Box<dyn GateProvider>, _, _) = if section.pulses.is_empty() {
        (Box::new(IdealGates::new()?), "ideal", Vec::new())
    } else {
        let mut pulses = Vec::new();
        for (gate, path) in &section.pulses {
            let path = ctx.path(path);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            pulses.push((gate.clone(), read_pulse_csv(&text).with_context(|| format!("pulse file {}", path.display()))?));
        }
        for g in correction_plan().gate_applications() {
            if !section.pulses.contains_key(g) {
                bail!("[qec.roundtrip.pulses] needs a pulse for `{g}`");
            }
        }
        (Box::new(PulseGates::new(&pulses)?), "synthesized", pulses)
    };
    let meta = Meta::new(
        "qec roundtrip",
        &json!({ "trials": trials, "seed": seed, "floor": section.floor, "pulses": pulses }),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = roundtrip_trials(trials, &mut rng, gates.as_ref(), Default::default())?;
    let passed = report.min_fidelity >= section.floor;
    println!(
        "{trials} trials ({mode}): min fidelity {:.12}, mean {:.12}",
        report.min_fidelity, report.mean_fidelity
    );
    let min = report.min_fidelity;
    ctx.out()?.write_json("roundtrip.json", &RoundtripArtifact { meta, mode, floor: section.floor, passed, report })?;
    if passed {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::TargetMissed(format!("roundtrip min fidelity {min} < floor {}", section.floor)))
    }
}

#[derive(Debug, Serialize)]
struct LifetimeSummary {
    figure_of_merit: f64,
    file: String,
    last: LifetimeRow,
    corrected_beats_unprotected_at_end: bool,
    uncorrected_below_unprotected: bool,
}

#[derive(Debug, Serialize)]
struct LifetimeArtifact {
    meta: Meta,
    model: &'static str,
    break_even: Option<f64>,
    curves: Vec<LifetimeSummary>,
}

fn lifetime(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let section = ctx.cfg.qec.as_ref().and_then(|q| q.lifetime.clone()).unwrap_or_default();
    if section.n_values.is_empty() || section.n_values.iter().any(|&n| !(n > 0.0)) {
        bail!("[qec.lifetime] n_values must be a non-empty list of positive numbers");
    }
    section.model.validate()?;
    let meta = Meta::new("qec lifetime", &serde_json::to_value(&section)?);
    let recovery = RecoveryChannel::from_circuit(&IdealGates::new()?)?;
    let curves = lifetime_sweep(&section.n_values, &section.model, &recovery, Default::default())?;
    let [lo, hi] = section.break_even_bracket;
    let be = break_even(&section.model, &recovery, lo, hi).ok();
    let out = ctx.out()?;
    let mut summaries = Vec::new();
    for c in &curves {
        let file = format!("lifetime_N{}.csv", c.figure_of_merit);
        out.write(&file, &format!("{}{}", meta.csv_lines(), c.to_csv()))?;
        let last = *c.rows.last().expect("curves have rows");
        summaries.push(LifetimeSummary {
            figure_of_merit: c.figure_of_merit,
            file,
            corrected_beats_unprotected_at_end: last.f_corrected >= last.f_unprotected,
            uncorrected_below_unprotected: c.rows.iter().skip(1).all(|r| r.f_uncorrected < r.f_unprotected),
            last,
        });
    }
    for s in &summaries {
        println!(
            "N={}: at t={} unprotected {:.4} uncorrected {:.4} corrected {:.4}",
            s.figure_of_merit, s.last.t, s.last.f_unprotected, s.last.f_uncorrected, s.last.f_corrected
        );
    }
    match be {
        Some(n) => println!("break-even at N = {n:.1}"),
        None => println!("break-even not bracketed by [{lo}, {hi}]"),
    }
    out.write_json("lifetime.json", &LifetimeArtifact { meta, model: LIFETIME_MODEL, break_even: be, curves: summaries })?;
    Ok(Outcome::Done)
}

fn hardware_params(section: &FomSection) -> anyhow::Result<HardwareParams> {
    let lambda_a = parse_quantity(&section.lambda_a, Dimension::Length, None).context("lambda_a")?;
    let ctx = Some((lambda_a, section.n, section.volume_wavelength));
    Ok(HardwareParams {
        q: section.q,
        chi2: parse_quantity(&section.chi2, Dimension::Susceptibility, None).context("chi2")?,
        v_shg: parse_quantity(&section.v_shg, Dimension::Volume, ctx).context("v_shg")?,
        v_twm: section
            .v_twm
            .as_deref()
            .map(|v| parse_quantity(v, Dimension::Volume, ctx))
            .transpose()
            .context("v_twm")?,
        lambda_a,
        n: section.n,
        omega_b: section.omega_b,
        omega_c: section.omega_c,
        omega_p: section.omega_p,
    })
}

#[derive(Debug, Serialize)]
struct FomArtifact {
    meta: Meta,
    report: FomReport,
}

fn fom(ctx: &Ctx, scenario: Option<Scenario>) -> anyhow::Result<Outcome> {
    let (params, source) = match (&ctx.cfg.fom, scenario) {
        (_, Some(Scenario::LithiumNiobate)) => (HardwareParams::lithium_niobate_ring(), json!("lithium-niobate")),
        (_, Some(Scenario::Projected)) => (HardwareParams::projected(), json!("projected")),
        (Some(section), None) => (hardware_params(section)?, serde_json::to_value(section)?),
        (None, None) => bail!("give --scenario or a [fom] config section"),
    };
    let report = hardware::report(&params)?;
    let meta = Meta::new("fom", &json!({ "source": source, "params": &params }));
    println!(
        "N = {:.4e}, tau = {:.4e} s, time unit = {:.4e} s",
        report.figure_of_merit, report.cavity_lifetime, report.time_unit
    );
    ctx.out()?.write_json("fom.json", &FomArtifact { meta, report })?;
    Ok(Outcome::Done)
}
