//! Files: steady states as CSV with `#` metadata lines, JSON targets and
//! schedules, and result bundles with a checksummed manifest.
//!
//! Floats in CSV are written with 17 significant digits and parse back
//! bit-for-bit; JSON uses the shortest representation that round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Grid, Kind, PiecewiseProfile, SStarTarget, SteadyState, SteadyStatePath, StepFunction};
use crate::parabolic::{ControlSchedule, SimResult};

pub const MANIFEST: &str = "manifest.json";

/// Decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

fn kind_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Divergence => "divergence",
        Kind::Multiplicative => "multiplicative",
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), message: message.into() }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Two-column `x,m` CSV without metadata.
pub fn samples_csv(grid: &Grid, values: &[f64]) -> String {
    let mut s = String::from("x,m\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{},{}", fmt_f64(grid.x(i)), fmt_f64(*v));
    }
    s
}

pub fn state_csv(state: &SteadyState) -> String {
    let g = &state.grid;
    let mut s = String::new();
    let _ = writeln!(s, "# kind,{}", kind_name(state.kind));
    let _ = writeln!(s, "# grid,{},{},{}", fmt_f64(g.lo), fmt_f64(g.hi), g.n);
    let _ = writeln!(s, "# boundary,{},{}", fmt_f64(state.boundary.0), fmt_f64(state.boundary.1));
    let _ = writeln!(s, "# start_flux,{}", fmt_f64(state.start_flux));
    let _ = writeln!(s, "# breakpoints,{}", join(state.profile.breakpoints()));
    let _ = writeln!(s, "# coefficients,{}", join(state.profile.values()));
    s.push_str(&samples_csv(g, &state.values));
    s
}

fn parse_floats(path: &Path, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| f.trim().parse::<f64>().map_err(|e| format_err(path, format!("bad number `{f}`: {e}"))))
        .collect()
}

/// Reads `x,m` rows (metadata lines ignored).
pub fn parse_samples(text: &str, path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let (mut xs, mut ms) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        if record.len() < 2 {
            return Err(format_err(path, format!("expected 2 columns, got {}", record.len())));
        }
        let row = parse_floats(path, &[&record[0], &record[1]])?;
        xs.push(row[0]);
        ms.push(row[1]);
    }
    if xs.is_empty() {
        return Err(format_err(path, "no samples"));
    }
    Ok((xs, ms))
}

pub fn parse_state(text: &str, path: &Path) -> Result<SteadyState> {
    let mut meta = std::collections::BTreeMap::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.trim().split(',');
            if let Some(key) = parts.next() {
                meta.insert(key.trim().to_string(), parts.map(str::trim).map(String::from).collect::<Vec<_>>());
            }
        }
    }
    let field = |key: &str| meta.get(key).ok_or_else(|| format_err(path, format!("missing `# {key}` line")));
    let floats = |key: &str| -> Result<Vec<f64>> {
        let f = field(key)?;
        parse_floats(path, &f.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let kind = match field("kind")?.first().map(String::as_str) {
        Some("divergence") => Kind::Divergence,
        Some("multiplicative") => Kind::Multiplicative,
        other => return Err(format_err(path, format!("unknown kind {other:?}"))),
    };
    let g = field("grid")?;
    if g.len() != 3 {
        return Err(format_err(path, "grid line needs lo,hi,n"));
    }
    let lohi = parse_floats(path, &[&g[0], &g[1]])?;
    let n: usize = g[2].parse().map_err(|_| format_err(path, format!("bad grid size `{}`", g[2])))?;
    let grid = Grid::new(lohi[0], lohi[1], n)?;
    let boundary = floats("boundary")?;
    if boundary.len() != 2 {
        return Err(format_err(path, "boundary line needs two values"));
    }
    let start_flux = *floats("start_flux")?.first().ok_or_else(|| format_err(path, "empty start_flux"))?;
    let profile = PiecewiseProfile::new(floats("breakpoints")?, floats("coefficients")?)?;
    let (xs, values) = parse_samples(text, path)?;
    if values.len() != grid.n {
        return Err(Error::GridMismatch(values.len(), grid.n));
    }
    if let Some(i) = xs.iter().enumerate().position(|(i, x)| (x - grid.x(i)).abs() > 1e-12 * (1.0 + x.abs())) {
        return Err(format_err(path, format!("abscissa {} does not match the grid", xs[i])));
    }
    let state = SteadyState::new(grid, values, profile, kind, start_flux)?;
    Ok(SteadyState { boundary: (boundary[0], boundary[1]), ..state })
}

pub fn write_state(path: &Path, state: &SteadyState) -> Result<()> {
    write_text(path, &state_csv(state))
}

pub fn read_state(path: &Path) -> Result<SteadyState> {
    parse_state(&read_text(path)?, path)
}

/// Initial data: the `m` column of an `x,m` CSV (with or without metadata).
pub fn read_values(path: &Path) -> Result<(Grid, Vec<f64>)> {
    let (xs, ms) = parse_samples(&read_text(path)?, path)?;
    let grid = Grid::new(xs[0], *xs.last().unwrap(), xs.len())?;
    Ok((grid, ms))
}

pub fn profile_csv(profile: &PiecewiseProfile) -> String {
    let mut s = String::from("x0,x1,value\n");
    for (i, v) in profile.values().iter().enumerate() {
        let (a, b) = profile.cell(i);
        let _ = writeln!(s, "{},{},{}", fmt_f64(a), fmt_f64(b), fmt_f64(*v));
    }
    s
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| format_err(path, e.to_string()))
}

#[derive(Deserialize)]
struct TargetRecord {
    levels: Vec<f64>,
    breakpoints: Vec<f64>,
}

#[derive(Deserialize)]
struct StepRecord {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

/// `{"levels": [...], "breakpoints": [...]}`.
pub fn read_sstar_target(path: &Path) -> Result<SStarTarget> {
    let r: TargetRecord = read_json(path)?;
    SStarTarget::new(r.levels, r.breakpoints)
}

/// `{"breakpoints": [...], "values": [...]}`.
pub fn read_step_function(path: &Path) -> Result<StepFunction> {
    let r: StepRecord = read_json(path)?;
    StepFunction::new(r.breakpoints, r.values)
}

pub fn schedule_json(schedule: &ControlSchedule) -> Result<String> {
    serde_json::to_string_pretty(schedule).map_err(|e| Error::Malformed(e.to_string()))
}

/// Reads a schedule, re-validating every interval and profile.
pub fn read_schedule(path: &Path) -> Result<ControlSchedule> {
    let raw: ControlSchedule = read_json(path)?;
    let intervals = raw
        .intervals()
        .iter()
        .map(|iv| {
            let profile = PiecewiseProfile::new(iv.profile.breakpoints().to_vec(), iv.profile.values().to_vec())?;
            Ok(crate::parabolic::ControlInterval { profile, ..iv.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    ControlSchedule::new(intervals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub version: String,
    pub parameters: serde_json::Value,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A set of named files written together with a manifest.
#[derive(Debug, Clone)]
pub struct Bundle {
    kind: String,
    parameters: serde_json::Value,
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn new(kind: &str, parameters: impl Serialize) -> Result<Self> {
        let parameters = serde_json::to_value(parameters).map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(Bundle { kind: kind.to_string(), parameters, files: Vec::new() })
    }

    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) -> &mut Self {
        self.files.push((name.to_string(), contents.into()));
        self
    }

    pub fn add_json(&mut self, name: &str, value: &impl Serialize) -> Result<&mut Self> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(self.add(name, text + "\n"))
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            kind: self.kind.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: self.parameters.clone(),
            files: self
                .files
                .iter()
                .map(|(name, data)| ManifestEntry {
                    name: name.clone(),
                    sha256: sha256_hex(data),
                    bytes: data.len() as u64,
                })
                .collect(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, data) in &self.files {
            let p = dir.join(name);
            fs::write(&p, data).map_err(|e| Error::io(&p, e))?;
        }
        let manifest = self.manifest();
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Malformed(e.to_string()))?;
        write_text(&dir.join(MANIFEST), &(text + "\n"))?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST))
}

/// Names of files whose contents no longer match the manifest.
pub fn verify_bundle(dir: &Path) -> Result<Vec<String>> {
    let manifest = read_manifest(dir)?;
    let mut bad = Vec::new();
    for entry in &manifest.files {
        let p = dir.join(&entry.name);
        let data = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        if sha256_hex(&data) != entry.sha256 {
            bad.push(entry.name.clone());
        }
    }
    Ok(bad)
}

pub fn state_bundle(state: &SteadyState, kind: &str, parameters: impl Serialize) -> Result<Bundle> {
    let mut b = Bundle::new(kind, parameters)?;
    b.add("state.csv", state_csv(state)).add("profile.csv", profile_csv(&state.profile));
    Ok(b)
}

fn member_name(i: usize) -> String {
    format!("member_{i:04}.csv")
}

/// One state file per member; the path parameters go in the manifest.
pub fn path_bundle(path: &SteadyStatePath, parameters: impl Serialize) -> Result<Bundle> {
    #[derive(Serialize)]
    struct PathParameters<P> {
        members: usize,
        continuity_modulus: f64,
        s: Vec<f64>,
        run: P,
    }
    let mut b = Bundle::new(
        "path",
        PathParameters {
            members: path.len(),
            continuity_modulus: path.continuity_modulus(),
            s: path.params.clone(),
            run: parameters,
        },
    )?;
    for (i, s) in path.states.iter().enumerate() {
        b.add(&member_name(i), state_csv(s));
    }
    Ok(b)
}

pub fn read_path_archive(dir: &Path) -> Result<SteadyStatePath> {
    let manifest = read_manifest(dir)?;
    let s: Vec<f64> = manifest
        .parameters
        .get("s")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .ok_or_else(|| format_err(&dir.join(MANIFEST), "missing path parameters `s`"))?;
    let states = manifest
        .files
        .iter()
        .filter(|e| e.name.starts_with("member_"))
        .map(|e| read_state(&dir.join(&e.name)))
        .collect::<Result<Vec<_>>>()?;
    SteadyStatePath::new(s, states)
}

#[derive(Serialize)]
struct SimSummary<'a> {
    final_time: f64,
    steps: usize,
    constraint_violation: f64,
    snapshots: usize,
    grid: &'a Grid,
}

/// Snapshots (one row per time), decay log, final state and summary.
pub fn sim_bundle(
    result: &SimResult,
    schedule: Option<&ControlSchedule>,
    kind: &str,
    parameters: impl Serialize,
) -> Result<Bundle> {
    let mut snaps = String::from("t");
    for i in 0..result.grid.n {
        let _ = write!(snaps, ",m{i}");
    }
    snaps.push('\n');
    for (t, s) in result.times.iter().zip(&result.snapshots) {
        let _ = writeln!(snaps, "{},{}", fmt_f64(*t), join(s));
    }
    let mut decay = String::from("t,l2_norm\n");
    for (t, n) in &result.decay_log {
        let _ = writeln!(decay, "{},{}", fmt_f64(*t), fmt_f64(*n));
    }
    let mut b = Bundle::new(kind, parameters)?;
    b.add("snapshots.csv", snaps)
        .add("decay_log.csv", decay)
        .add("final_state.csv", samples_csv(&result.grid, &result.final_state));
    b.add_json(
        "summary.json",
        &SimSummary {
            final_time: result.final_time,
            steps: result.steps,
            constraint_violation: result.constraint_violation,
            snapshots: result.times.len(),
            grid: &result.grid,
        },
    )?;
    if let Some(s) = schedule {
        b.add("schedule.json", schedule_json(s)? + "\n");
    }
    Ok(b)
}

/// Output root: `PATTERNFORGE_OUT` when set, else `default`.
pub fn output_root(default: &Path) -> PathBuf {
    std::env::var_os("PATTERNFORGE_OUT").map(PathBuf::from).unwrap_or_else(|| default.to_path_buf())
}
