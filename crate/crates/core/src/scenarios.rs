//! Scenario ensembles: wind-speed perturbation through a turbine power curve,
//! probabilities, train/validation splits and the on-disk formats.

use crate::grid::{BusId, GenId, Grid};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("wind speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("scenario count must be at least 1")]
    EmptyEnsemble,
    #[error("empty validation set: n_train = {n_train} uses all {total} scenarios")]
    EmptyValidation { n_train: usize, total: usize },
    #[error("empty training set: n_train must be at least 1")]
    EmptyTraining,
    #[error("invalid power curve: {0}")]
    InvalidCurve(String),
    #[error("invalid site {site}: {reason}")]
    InvalidSite { site: usize, reason: String },
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilityMass(f64),
    #[error("scenarios disagree on unit commitment")]
    CommitmentMismatch,
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// One possible future over the control period.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: usize,
    /// Renewable injection `[T+1][bus]`, MW.
    pub p_r: Vec<Vec<f64>>,
    /// Nominal load injection `[T+1][bus]`, MW, non-positive.
    pub p_l0: Vec<Vec<f64>>,
    pub commitment: Vec<GenId>,
    pub prob: f64,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.p_r.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub seed: u64,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.scenarios.first().map_or(0, Scenario::horizon)
    }

    pub fn total_probability(&self) -> f64 {
        self.scenarios.iter().map(|s| s.prob).sum()
    }

    pub fn check_probability(&self) -> Result<(), ScenarioError> {
        let total = self.total_probability();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(ScenarioError::ProbabilityMass(total));
        }
        Ok(())
    }

    /// Give every member probability `1/N`.
    pub fn renormalize_uniform(&mut self) {
        let p = 1.0 / self.scenarios.len() as f64;
        for s in &mut self.scenarios {
            s.prob = p;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSite {
    pub bus: BusId,
    /// MW.
    pub nameplate: f64,
    /// Base wind speed per time step, m/s.
    pub base_speed: Vec<f64>,
    /// Noise standard deviation per time step, m/s.
    pub noise_std: Vec<f64>,
}

/// Turbine output as a fraction of nameplate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerCurve {
    /// Zero below `cut_in`, cubic in the normalized speed up to `rated`,
    /// one up to `cut_out`, zero beyond.
    Cubic { cut_in: f64, rated: f64, cut_out: f64 },
    /// Piecewise-linear interpolation through `(speed, fraction)` breakpoints;
    /// zero past the last breakpoint.
    Table { points: Vec<(f64, f64)> },
}

impl Default for PowerCurve {
    fn default() -> Self {
        PowerCurve::Cubic {
            cut_in: 3.5,
            rated: 12.0,
            cut_out: 25.0,
        }
    }
}

impl PowerCurve {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            PowerCurve::Cubic { cut_in, rated, cut_out } => {
                if !(0.0 <= *cut_in && cut_in < rated && rated <= cut_out) {
                    return Err(ScenarioError::InvalidCurve(format!(
                        "need 0 <= cut_in < rated <= cut_out, got {cut_in}, {rated}, {cut_out}"
                    )));
                }
            }
            PowerCurve::Table { points } => {
                if points.len() < 2 {
                    return Err(ScenarioError::InvalidCurve("table needs two points".into()));
                }
                for w in points.windows(2) {
                    if !(w[0].0 < w[1].0) {
                        return Err(ScenarioError::InvalidCurve("speeds must increase".into()));
                    }
                }
                if points.iter().any(|p| !(0.0..=1.0).contains(&p.1)) {
                    return Err(ScenarioError::InvalidCurve(
                        "fractions must lie in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn fraction(&self, v: f64) -> Result<f64, ScenarioError> {
        if v < 0.0 || v.is_nan() {
            return Err(ScenarioError::NegativeSpeed(v));
        }
        Ok(match self {
            PowerCurve::Cubic { cut_in, rated, cut_out } => {
                if v < *cut_in || v >= *cut_out {
                    0.0
                } else if v >= *rated {
                    1.0
                } else {
                    ((v - cut_in) / (rated - cut_in)).powi(3)
                }
            }
            PowerCurve::Table { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if v < first.0 {
                    first.1
                } else if v > last.0 {
                    0.0
                } else {
                    let k = points.partition_point(|p| p.0 <= v).clamp(1, points.len() - 1);
                    let (a, b) = (points[k - 1], points[k]);
                    a.1 + (b.1 - a.1) * (v - a.0) / (b.0 - a.0)
                }
            }
        })
    }
}

/// Standard curve fraction.
pub fn power_curve(v: f64) -> Result<f64, ScenarioError> {
    PowerCurve::default().fraction(v)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationOptions {
    pub curve: PowerCurve,
    /// Std of additive Gaussian noise on every nonzero load entry, MW.
    pub load_noise_std: f64,
}

fn scenario_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64))
}

fn check_sites(sites: &[WindSite], len: usize) -> Result<(), ScenarioError> {
    for (i, s) in sites.iter().enumerate() {
        if !(s.nameplate > 0.0) {
            return Err(ScenarioError::InvalidSite {
                site: i,
                reason: format!("nameplate must be positive, got {}", s.nameplate),
            });
        }
        for (what, series) in [("base_speed", &s.base_speed), ("noise_std", &s.noise_std)] {
            if series.len() != len {
                return Err(ScenarioError::LengthMismatch {
                    what: format!("site {i} {what}"),
                    expected: len,
                    got: series.len(),
                });
            }
        }
        if let Some(v) = s.base_speed.iter().find(|v| **v < 0.0) {
            return Err(ScenarioError::NegativeSpeed(*v));
        }
        if s.noise_std.iter().any(|v| *v < 0.0) {
            return Err(ScenarioError::InvalidSite {
                site: i,
                reason: "noise std must be non-negative".into(),
            });
        }
    }
    Ok(())
}

/// Raw Gaussian draws for scenario `k`: `[site][t]` with unit variance,
/// drawn site by site, then time step by time step.
pub fn sample_noise(n_sites: usize, len: usize, seed: u64, k: usize) -> Vec<Vec<f64>> {
    let mut rng = scenario_rng(seed, k);
    (0..n_sites)
        .map(|_| (0..len).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Wind speeds of scenario `k`, `[site][t]`. Scenario 0 is the base.
pub fn perturbed_speeds(sites: &[WindSite], seed: u64, k: usize) -> Vec<Vec<f64>> {
    if k == 0 {
        return sites.iter().map(|s| s.base_speed.clone()).collect();
    }
    let len = sites.first().map_or(0, |s| s.base_speed.len());
    let z = sample_noise(sites.len(), len, seed, k);
    sites
        .iter()
        .zip(z)
        .map(|(s, zs)| {
            s.base_speed
                .iter()
                .zip(&s.noise_std)
                .zip(zs)
                .map(|((v, sd), z)| (v + sd * z).max(0.0))
                .collect()
        })
        .collect()
}

/// Build an ensemble of `count` scenarios. Scenario 0 is the unperturbed base
/// forecast; scenario `k` draws its noise from a generator seeded `seed + k`.
pub fn generate_scenarios(
    sites: &[WindSite],
    base_load: &[Vec<f64>],
    commitment: &[GenId],
    count: usize,
    seed: u64,
    opts: &GenerationOptions,
) -> Result<ScenarioSet, ScenarioError> {
    if count == 0 {
        return Err(ScenarioError::EmptyEnsemble);
    }
    opts.curve.validate()?;
    let len = base_load.len();
    let n = base_load.first().map_or(0, Vec::len);
    for (t, row) in base_load.iter().enumerate() {
        if row.len() != n {
            return Err(ScenarioError::LengthMismatch {
                what: format!("base load row {t}"),
                expected: n,
                got: row.len(),
            });
        }
    }
    check_sites(sites, len)?;
    for (i, s) in sites.iter().enumerate() {
        if s.bus.0 >= n {
            return Err(ScenarioError::InvalidSite {
                site: i,
                reason: format!("bus {} outside the {n}-bus load table", s.bus),
            });
        }
    }
    let prob = 1.0 / count as f64;
    let mut scenarios = Vec::with_capacity(count);
    for k in 0..count {
        let speeds = perturbed_speeds(sites, seed, k);
        let mut p_r = vec![vec![0.0; n]; len];
        for (s, v) in sites.iter().zip(&speeds) {
            for t in 0..len {
                p_r[t][s.bus.0] += s.nameplate * opts.curve.fraction(v[t])?;
            }
        }
        let mut p_l0 = base_load.to_vec();
        if k > 0 && opts.load_noise_std > 0.0 {
            // continues the scenario's stream after the wind draws
            let mut rng = scenario_rng(seed, k);
            for _ in 0..sites.len() * len {
                let _: f64 = StandardNormal.sample(&mut rng);
            }
            for row in &mut p_l0 {
                for p in row.iter_mut().filter(|p| **p != 0.0) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *p = (*p + opts.load_noise_std * z).min(0.0);
                }
            }
        }
        scenarios.push(Scenario {
            id: k,
            p_r,
            p_l0,
            commitment: commitment.to_vec(),
            prob,
        });
    }
    Ok(ScenarioSet { scenarios, seed })
}

/// Shuffle with a seeded generator and cut into `n_train` / rest.
/// Each part is kept in id order with uniform probabilities.
pub fn split(
    ensemble: &ScenarioSet,
    n_train: usize,
    seed: u64,
) -> Result<(ScenarioSet, ScenarioSet), ScenarioError> {
    let total = ensemble.len();
    if n_train == 0 {
        return Err(ScenarioError::EmptyTraining);
    }
    if n_train >= total {
        return Err(ScenarioError::EmptyValidation { n_train, total });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let take = |idx: &[usize]| {
        let mut set = ScenarioSet {
            scenarios: idx.iter().map(|&i| ensemble.scenarios[i].clone()).collect(),
            seed: ensemble.seed,
        };
        set.renormalize_uniform();
        set
    };
    Ok((take(&train_idx), take(&val_idx)))
}

// ---------------------------------------------------------------------------
// Files

/// A scenario series column: either one value for every step or a full series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Scalar(f64),
    Values(Vec<f64>),
}

impl Series {
    fn expand(&self, len: usize, what: &str) -> Result<Vec<f64>, ScenarioError> {
        match self {
            Series::Scalar(v) => Ok(vec![*v; len]),
            Series::Values(v) if v.len() == len => Ok(v.clone()),
            Series::Values(v) => Err(ScenarioError::LengthMismatch {
                what: what.to_string(),
                expected: len,
                got: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub bus: BusId,
    pub nameplate: f64,
    /// Inline speeds; otherwise taken from the wind CSV by site index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speeds: Option<Vec<f64>>,
    pub std: Series,
}

/// Scenario section of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of steps T; series have T+1 entries.
    pub horizon: usize,
    pub count: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    pub sites: Vec<SiteConfig>,
    /// `(t_index, bus_id, value_mw)` rows.
    pub load_csv: PathBuf,
    /// `(t_index, site_id, speed_mps)` rows, needed when a site has no inline speeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind_csv: Option<PathBuf>,
    #[serde(default)]
    pub power_curve: PowerCurve,
    #[serde(default)]
    pub load_noise_std: f64,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(dir);
        Ok(cfg)
    }

    /// Make relative CSV paths relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        if self.load_csv.is_relative() {
            self.load_csv = dir.join(&self.load_csv);
        }
        if let Some(w) = &mut self.wind_csv {
            if w.is_relative() {
                *w = dir.join(&*w);
            }
        }
    }

    pub fn sites(&self) -> Result<Vec<WindSite>, ScenarioError> {
        let len = self.horizon + 1;
        let wind = match &self.wind_csv {
            Some(p) => Some(read_indexed_csv(p, len, self.sites.len(), "site_id")?),
            None => None,
        };
        self.sites
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let base_speed = match (&s.speeds, &wind) {
                    (Some(v), _) => Series::Values(v.clone()).expand(len, &format!("site {i} speeds"))?,
                    (None, Some(w)) => w.iter().map(|row| row[i]).collect(),
                    (None, None) => {
                        return Err(ScenarioError::InvalidSite {
                            site: i,
                            reason: "no inline speeds and no wind_csv".into(),
                        })
                    }
                };
                Ok(WindSite {
                    bus: s.bus,
                    nameplate: s.nameplate,
                    base_speed,
                    noise_std: s.std.expand(len, &format!("site {i} std"))?,
                })
            })
            .collect()
    }

    pub fn generate(&self, grid: &Grid, seed: u64) -> Result<ScenarioSet, ScenarioError> {
        let load = read_indexed_csv(&self.load_csv, self.horizon + 1, grid.n_buses(), "bus_id")?;
        let sites = self.sites()?;
        generate_scenarios(
            &sites,
            &load,
            grid.online_generators(),
            self.count,
            seed,
            &GenerationOptions {
                curve: self.power_curve.clone(),
                load_noise_std: self.load_noise_std,
            },
        )
    }
}

/// Read `(t_index, key, value)` rows into a dense `[len][width]` table.
/// Missing entries are zero.
pub fn read_indexed_csv(
    path: &Path,
    len: usize,
    width: usize,
    key: &str,
) -> Result<Vec<Vec<f64>>, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut table = vec![vec![0.0; width]; len];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let line = row + 2;
        if record.len() != 3 {
            return Err(format_err(path, format!("line {line}: expected 3 columns")));
        }
        let t: usize = record[0]
            .parse()
            .map_err(|_| format_err(path, format!("line {line}: bad t_index '{}'", &record[0])))?;
        let k: usize = record[1]
            .parse()
            .map_err(|_| format_err(path, format!("line {line}: bad {key} '{}'", &record[1])))?;
        let v: f64 = record[2]
            .parse()
            .map_err(|_| format_err(path, format!("line {line}: bad value '{}'", &record[2])))?;
        if t >= len || k >= width {
            return Err(format_err(
                path,
                format!("line {line}: index ({t}, {k}) outside {len} x {width}"),
            ));
        }
        table[t][k] = v;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    id: usize,
    prob: f64,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    horizon: usize,
    n_buses: usize,
    commitment: Vec<GenId>,
    scenarios: Vec<ManifestEntry>,
}

const MANIFEST: &str = "manifest.json";

/// Write each scenario to `scenario_<id>.csv` (`t,bus,p_r_mw,p_l0_mw`) plus a manifest.
pub fn write_scenario_dir(set: &ScenarioSet, dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::new();
    for s in &set.scenarios {
        let file = format!("scenario_{:03}.csv", s.id);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| format_err(&path, e.to_string()))?;
        let wr = |e: csv::Error| format_err(&path, e.to_string());
        w.write_record(["t", "bus", "p_r_mw", "p_l0_mw"]).map_err(wr)?;
        for t in 0..s.p_r.len() {
            for b in 0..s.p_r[t].len() {
                w.write_record([
                    t.to_string(),
                    b.to_string(),
                    format!("{:e}", s.p_r[t][b]),
                    format!("{:e}", s.p_l0[t][b]),
                ])
                .map_err(|e| format_err(&path, e.to_string()))?;
            }
        }
        w.flush().map_err(io_err(&path))?;
        entries.push(ManifestEntry {
            id: s.id,
            prob: s.prob,
            file,
        });
    }
    let manifest = Manifest {
        seed: set.seed,
        horizon: set.horizon(),
        n_buses: set.scenarios.first().map_or(0, |s| s.p_r[0].len()),
        commitment: set.scenarios.first().map_or(Vec::new(), |s| s.commitment.clone()),
        scenarios: entries,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(io_err(&path))
}

/// Read one scenario CSV in the `t,bus,p_r_mw,p_l0_mw` layout.
pub fn read_scenario_csv(
    path: &Path,
    id: usize,
    len: usize,
    n: usize,
    commitment: &[GenId],
    prob: f64,
) -> Result<Scenario, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut p_r = vec![vec![0.0; n]; len];
    let mut p_l0 = vec![vec![0.0; n]; len];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let line = row + 2;
        let field = |i: usize| -> Result<f64, ScenarioError> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| format_err(path, format!("line {line}: bad column {}", i + 1)))
        };
        let (t, b) = (field(0)? as usize, field(1)? as usize);
        if t >= len || b >= n {
            return Err(format_err(path, format!("line {line}: index ({t}, {b}) out of range")));
        }
        p_r[t][b] = field(2)?;
        p_l0[t][b] = field(3)?;
    }
    Ok(Scenario {
        id,
        p_r,
        p_l0,
        commitment: commitment.to_vec(),
        prob,
    })
}

/// Load a scenario directory written by [`write_scenario_dir`].
pub fn read_scenario_dir(dir: &Path) -> Result<ScenarioSet, ScenarioError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))?;
    let mut scenarios = Vec::new();
    for e in &manifest.scenarios {
        scenarios.push(read_scenario_csv(
            &dir.join(&e.file),
            e.id,
            manifest.horizon + 1,
            manifest.n_buses,
            &manifest.commitment,
            e.prob,
        )?);
    }
    let set = ScenarioSet {
        scenarios,
        seed: manifest.seed,
    };
    set.check_probability()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(speed: f64, std: f64, len: usize) -> WindSite {
        WindSite {
            bus: BusId(1),
            nameplate: 100.0,
            base_speed: vec![speed; len],
            noise_std: vec![std; len],
        }
    }

    #[test]
    fn curve_examples() {
        assert_eq!(power_curve(2.0).unwrap(), 0.0);
        assert_eq!(power_curve(15.0).unwrap(), 1.0);
        assert!((power_curve(7.75).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(power_curve(25.0).unwrap(), 0.0);
        assert_eq!(power_curve(12.0).unwrap(), 1.0);
        assert!(power_curve(-1.0).is_err());
    }

    #[test]
    fn table_curve_interpolates() {
        let c = PowerCurve::Table {
            points: vec![(3.0, 0.0), (10.0, 1.0), (20.0, 1.0)],
        };
        c.validate().unwrap();
        assert!((c.fraction(6.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(c.fraction(20.0).unwrap(), 1.0);
        assert_eq!(c.fraction(21.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_std_reproduces_base() {
        let load = vec![vec![0.0, -50.0]; 4];
        let set = generate_scenarios(&[site(8.0, 0.0, 4)], &load, &[GenId(0)], 5, 1, &Default::default())
            .unwrap();
        for s in &set.scenarios[1..] {
            assert_eq!(s.p_r, set.scenarios[0].p_r);
        }
        assert_eq!(set.total_probability(), 1.0);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let load = vec![vec![0.0, -50.0]; 4];
        let a = generate_scenarios(&[site(8.0, 2.0, 4)], &load, &[], 7, 42, &Default::default()).unwrap();
        let b = generate_scenarios(&[site(8.0, 2.0, 4)], &load, &[], 7, 42, &Default::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.scenarios[1], a.scenarios[2]);
    }

    #[test]
    fn length_mismatch_is_reported() {
        let load = vec![vec![0.0, -50.0]; 4];
        let err = generate_scenarios(&[site(8.0, 2.0, 3)], &load, &[], 2, 0, &Default::default())
            .unwrap_err();
        assert!(matches!(err, ScenarioError::LengthMismatch { .. }));
    }

    #[test]
    fn split_sizes() {
        let load = vec![vec![0.0, -50.0]; 2];
        let set = generate_scenarios(&[site(8.0, 1.0, 2)], &load, &[], 26, 3, &Default::default()).unwrap();
        let (train, val) = split(&set, 8, 9).unwrap();
        assert_eq!((train.len(), val.len()), (8, 18));
        train.check_probability().unwrap();
        val.check_probability().unwrap();
        let mut ids: Vec<usize> = train.scenarios.iter().chain(&val.scenarios).map(|s| s.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..26).collect::<Vec<_>>());
        let (train2, _) = split(&set, 8, 9).unwrap();
        assert_eq!(train, train2);
        let (_, single) = split(&set, 25, 9).unwrap();
        assert_eq!(single.len(), 1);
        let err = split(&set, 26, 9).unwrap_err();
        assert!(err.to_string().contains("empty validation set"));
        assert!(split(&set, 0, 9).is_err());
    }

    #[test]
    fn noise_has_unit_variance() {
        let z: Vec<f64> = (1..400).flat_map(|k| sample_noise(2, 13, 7, k).concat()).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // 10374 draws: 4.5 standard errors
        assert!(mean.abs() < 4.5 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 4.5 * (2.0 / n).sqrt(), "var {var}");
    }

    #[test]
    fn speed_perturbation_matches_std() {
        let sites = [site(8.0, 1.5, 6)];
        let dev: Vec<f64> = (1..800).flat_map(|k| perturbed_speeds(&sites, 11, k)[0].clone()).map(|v| v - 8.0).collect();
        let n = dev.len() as f64;
        let sd = (dev.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!((sd - 1.5).abs() < 0.05, "{sd}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn wind_within_nameplate(seed in any::<u64>(), speed in 0.0f64..30.0, std in 0.0f64..5.0, count in 1usize..12) {
                let load = vec![vec![0.0, -50.0]; 5];
                let set = generate_scenarios(&[site(speed, std, 5)], &load, &[], count, seed, &Default::default()).unwrap();
                prop_assert_eq!(set.len(), count);
                prop_assert!((set.total_probability() - 1.0).abs() < 1e-12);
                for s in &set.scenarios {
                    for row in &s.p_r {
                        prop_assert!(row[1] >= 0.0 && row[1] <= 100.0);
                        prop_assert_eq!(row[0], 0.0);
                    }
                }
            }
        }
    }
}
