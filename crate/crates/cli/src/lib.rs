//! Command implementations behind the `tentacle` binary.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tentacle::dynamics::{enumerate_closed_characteristics, length_action_check, orbit_action, ClosedCharacteristic};
use tentacle::floer::{self, FlowDiagnostics, FlowOptions, LoopState};
use tentacle::hormander::{classify, Decomposition};
use tentacle::io::{read_hamiltonian, to_canonical_json};
use tentacle::tentacular::{full_report, Overall, Status, TentacularReport};
use tentacle::{Error, Hamiltonian};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_UNRESOLVED: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Hörmander normal-form decomposition
    Classify,
    /// Strongly tentacular axioms with certificates
    Check,
    /// Closed characteristics on the zero level
    Orbits,
    /// Positive gradient flow of the discrete action
    Flow,
    /// Everything above in one document
    Report,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Clone, Debug, PartialEq, Parser)]
#[command(
    name = "tentacle",
    version,
    about = "Quadratic Hamiltonians: normal forms, tentacular axioms, orbits and Floer flows"
)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Hamiltonian JSON {"dim", "A", "c"}
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long = "k-max", default_value_t = 3)]
    pub k_max: u32,
    /// Samples per loop
    #[arg(long = "N", default_value_t = 16)]
    pub n: usize,
    #[arg(long = "s-max", default_value_t = 0.5)]
    pub s_max: f64,
    /// Flow step, defaults to the stability bound
    #[arg(long)]
    pub ds: Option<f64>,
    #[arg(long = "n-quad", default_value_t = 512)]
    pub n_quad: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Number of seeded flow runs when no initial loops are given
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// LoopState JSON, or an array of them, as flow initial conditions
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Binary snapshot file for flow runs (one file per run, suffixed when batching)
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults of the command line.
    pub fn new(command: Command, input: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            input: input.into(),
            output: None,
            format: Format::Json,
            k_max: 3,
            n: 16,
            s_max: 0.5,
            ds: None,
            n_quad: 512,
            seed: 0,
            jobs: 1,
            runs: 1,
            init: None,
            snapshots: None,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(16..=1024).contains(&self.n) || !self.n.is_power_of_two() {
            return Err(Error::Invalid(format!("--N must be a power of two in [16, 1024], got {}", self.n)));
        }
        if !(1..=64).contains(&self.k_max) {
            return Err(Error::Invalid(format!("--k-max must lie in [1, 64], got {}", self.k_max)));
        }
        if !self.s_max.is_finite() || self.s_max < 0.0 {
            return Err(Error::Invalid(format!("--s-max must be finite and non-negative, got {}", self.s_max)));
        }
        if let Some(ds) = self.ds {
            if !(ds.is_finite() && ds > 0.0) {
                return Err(Error::Invalid(format!("--ds must be positive, got {ds}")));
            }
        }
        if self.n_quad == 0 || self.jobs == 0 || self.runs == 0 {
            return Err(Error::Invalid("--n-quad, --jobs and --runs must be positive".into()));
        }
        Ok(())
    }
}

/// Exit status and the rendered document (empty when nothing could be produced).
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub body: String,
    pub message: Option<String>,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_unresolved() {
        EXIT_UNRESOLVED
    } else {
        EXIT_VALIDATION
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRow {
    #[serde(flatten)]
    pub orbit: ClosedCharacteristic,
    pub length_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitTable {
    pub n_quad: usize,
    pub orbits: Vec<OrbitRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRun {
    pub index: usize,
    pub diagnostics: Option<FlowDiagnostics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowBatch {
    #[serde(rename = "N")]
    pub n: usize,
    pub s_max: f64,
    pub ds: f64,
    pub runs: Vec<FlowRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section<T> {
    pub value: Option<T>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullReport {
    pub hamiltonian: tentacle::io::HamiltonianFile,
    pub decomposition: Section<Decomposition>,
    pub tentacular: Section<TentacularReport>,
    pub orbits: Section<OrbitTable>,
    pub flow: Section<FlowBatch>,
}

fn section<T>(r: Result<T, Error>, worst: &mut i32) -> Section<T> {
    match r {
        Ok(value) => Section { value: Some(value), error: None },
        Err(e) => {
            *worst = (*worst).max(exit_code(&e));
            Section { value: None, error: Some(e.to_string()) }
        }
    }
}

pub fn orbit_table(h: &Hamiltonian, cfg: &RunConfig) -> Result<OrbitTable, Error> {
    let mut orbits = Vec::new();
    for mut o in enumerate_closed_characteristics(h, cfg.k_max)? {
        o.action = orbit_action(&o, h, cfg.n_quad);
        let (_, ratio) = length_action_check(&o, h)?;
        orbits.push(OrbitRow { orbit: o, length_ratio: ratio });
    }
    Ok(OrbitTable { n_quad: cfg.n_quad, orbits })
}

/// Smoothly perturbed discrete critical circle of the first orbit, or a constant
/// seeded loop when there is none.
pub fn seeded_initial_loops(h: &Hamiltonian, cfg: &RunConfig) -> Result<Vec<LoopState>, Error> {
    let first = enumerate_closed_characteristics(h, 1).ok().and_then(|v| v.into_iter().next());
    (0..cfg.runs)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
            match &first {
                Some(o) => {
                    let base = LoopState::discrete_circle(o, h, cfg.n)?;
                    let coeffs: Vec<[f64; 3]> = (0..h.dim())
                        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                        .collect();
                    let v = DMatrix::from_fn(h.dim(), cfg.n, |i, j| {
                        let t = 2.0 * PI * j as f64 / cfg.n as f64;
                        let [a, b, c] = coeffs[i];
                        base.samples()[(i, j)] + 1e-2 * (a + b * t.cos() + c * t.sin())
                    });
                    LoopState::new(base.eta(), v)
                }
                None => {
                    let x = DVector::from_fn(h.dim(), |_, _| rng.gen_range(-1.0..1.0));
                    LoopState::constant(&x, 0.0, cfg.n)
                }
            }
        })
        .collect()
}

fn read_initial_loops(path: &Path) -> Result<Vec<LoopState>, Error> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.is_array() {
        Ok(serde_json::from_value(value)?)
    } else {
        Ok(vec![serde_json::from_value(value)?])
    }
}

fn snapshot_path(base: &Path, index: usize, total: usize) -> PathBuf {
    if total == 1 {
        base.to_path_buf()
    } else {
        let mut s = base.as_os_str().to_owned();
        s.push(format!(".{index}"));
        PathBuf::from(s)
    }
}

pub fn flow_batch(h: &Hamiltonian, cfg: &RunConfig) -> Result<FlowBatch, Error> {
    let inits = match &cfg.init {
        Some(p) => read_initial_loops(p)?,
        None => seeded_initial_loops(h, cfg)?,
    };
    if let Some(bad) = inits.iter().find(|u| u.dim() != h.dim()) {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: bad.dim() });
    }
    let opts = FlowOptions { s_max: cfg.s_max, ds: cfg.ds, ..Default::default() };
    let n = inits.first().map_or(cfg.n, LoopState::n);
    let ds = cfg.ds.unwrap_or_else(|| floer::cfl_bound(h, n));
    let results: Vec<Result<FlowDiagnostics, Error>> = match &cfg.snapshots {
        None => floer::integrate_flow_batch(&inits, h, &opts, cfg.jobs)?,
        Some(base) => inits
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let mut w = BufWriter::new(File::create(snapshot_path(base, i, inits.len()))?);
                floer::integrate_flow_observed(u, h, &opts, |_, s| floer::write_snapshot(&mut w, s))
            })
            .collect(),
    };
    let mut runs = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(d) => runs.push(FlowRun { index, diagnostics: Some(d), error: None }),
            Err(e @ Error::Precondition(_)) => return Err(e),
            Err(e) => runs.push(FlowRun { index, diagnostics: None, error: Some(e.to_string()) }),
        }
    }
    Ok(FlowBatch { n, s_max: cfg.s_max, ds, runs })
}

fn report_code(r: &TentacularReport) -> i32 {
    match r.overall {
        Overall::Unresolved => EXIT_UNRESOLVED,
        _ => EXIT_OK,
    }
}

fn flow_code(b: &FlowBatch) -> i32 {
    if b.runs.iter().any(|r| r.error.is_some()) {
        EXIT_UNRESOLVED
    } else {
        EXIT_OK
    }
}

pub fn run(cfg: &RunConfig) -> Outcome {
    match execute(cfg) {
        Ok((code, body)) => {
            if let Some(path) = &cfg.output {
                if let Err(e) = std::fs::write(path, &body) {
                    return Outcome { code: EXIT_VALIDATION, body, message: Some(format!("cannot write output: {e}")) };
                }
            }
            Outcome { code, body, message: None }
        }
        Err(e) => Outcome { code: exit_code(&e), body: String::new(), message: Some(e.to_string()) },
    }
}

fn render<T: Serialize>(cfg: &RunConfig, value: &T, text: impl FnOnce() -> String) -> Result<String, Error> {
    match cfg.format {
        Format::Json => {
            let mut s = to_canonical_json(value)?;
            s.push('\n');
            Ok(s)
        }
        Format::Text => Ok(text()),
    }
}

fn execute(cfg: &RunConfig) -> Result<(i32, String), Error> {
    cfg.validate()?;
    let h = read_hamiltonian(&cfg.input)?;
    log::info!("loaded Hamiltonian of dimension {}", h.dim());
    match cfg.command {
        Command::Classify => {
            let d = classify(&h)?;
            Ok((EXIT_OK, render(cfg, &d, || text_decomposition(&d))?))
        }
        Command::Check => {
            let r = full_report(&h)?;
            Ok((report_code(&r), render(cfg, &r, || text_report(&r))?))
        }
        Command::Orbits => {
            let t = orbit_table(&h, cfg)?;
            Ok((EXIT_OK, render(cfg, &t, || text_orbits(&t))?))
        }
        Command::Flow => {
            let b = flow_batch(&h, cfg)?;
            Ok((flow_code(&b), render(cfg, &b, || text_flow(&b))?))
        }
        Command::Report => {
            let mut worst = EXIT_OK;
            let decomposition = section(classify(&h), &mut worst);
            let tentacular = section(full_report(&h), &mut worst);
            if let Some(r) = &tentacular.value {
                worst = worst.max(report_code(r));
            }
            let orbits = section(orbit_table(&h, cfg), &mut worst);
            let flow = section(flow_batch(&h, cfg), &mut worst);
            if let Some(b) = &flow.value {
                worst = worst.max(flow_code(b));
            }
            let full = FullReport { hamiltonian: (&h).into(), decomposition, tentacular, orbits, flow };
            Ok((worst, render(cfg, &full, || text_full(&full))?))
        }
    }
}

fn text_decomposition(d: &Decomposition) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "signature ({}, {}), semisimple: {}", d.signature.0, d.signature.1, d.semisimple);
    for b in &d.blocks {
        let _ = writeln!(s, "  {:?}", b);
    }
    if let Some(r) = d.residual {
        let _ = writeln!(s, "transform residual {r:.3e}");
    }
    for w in &d.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Verified => "verified",
        Status::CriteriaNotMet => "criteria not met",
        Status::Unresolved => "unresolved",
    }
}

fn text_report(r: &TentacularReport) -> String {
    let mut s = String::new();
    for v in &r.verdicts {
        let _ = writeln!(s, "{:?}: {}", v.axiom, status_word(v.status));
        for n in &v.notes {
            let _ = writeln!(s, "    {n}");
        }
    }
    let _ = writeln!(s, "overall: {:?}", r.overall);
    s
}

fn text_orbits(t: &OrbitTable) -> String {
    let mut s = String::from("    mu     k         eta       action   cz   length/|action|\n");
    for row in &t.orbits {
        let o = &row.orbit;
        let cz = o.cz_transverse.map_or("-".to_string(), |c| c.to_string());
        let _ =
            writeln!(s, "{:6.3} {:5} {:11.6} {:12.6} {:>4} {:10.6}", o.mu, o.k, o.eta, o.action, cz, row.length_ratio);
    }
    s
}

fn text_flow(b: &FlowBatch) -> String {
    let mut s = format!("N = {}, ds = {:.3e}, s_max = {}\n", b.n, b.ds, b.s_max);
    for r in &b.runs {
        match (&r.diagnostics, &r.error) {
            (Some(d), _) => {
                let _ = writeln!(
                    s,
                    "run {}: action {:.9} -> {:.9}, energy {:.9}, converged {}, escaped {}",
                    r.index,
                    d.action_series.first().copied().unwrap_or(f64::NAN),
                    d.action_series.last().copied().unwrap_or(f64::NAN),
                    d.energy,
                    d.converged,
                    d.escaped
                );
            }
            (None, Some(e)) => {
                let _ = writeln!(s, "run {}: error: {e}", r.index);
            }
            _ => {}
        }
    }
    s
}

fn text_full(f: &FullReport) -> String {
    fn part<T>(title: &str, sec: &Section<T>, body: impl Fn(&T) -> String) -> String {
        match (&sec.value, &sec.error) {
            (Some(v), _) => format!("== {title}\n{}", body(v)),
            (None, Some(e)) => format!("== {title}\nerror: {e}\n"),
            _ => String::new(),
        }
    }
    [
        part("classification", &f.decomposition, text_decomposition),
        part("tentacular axioms", &f.tentacular, text_report),
        part("closed characteristics", &f.orbits, text_orbits),
        part("flow", &f.flow, text_flow),
    ]
    .concat()
}
