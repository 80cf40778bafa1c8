//! The bundled 14-bus desk case.
//!
//! An eight-bus meshed main area with three thermal units and two radial
//! pockets. Each pocket holds a hydro unit, a wind site and a load, and
//! exports over a single tie line whose rating is close to the scheduled
//! export. Wind ramps up monotonically over the hour.
//!
//! The files under `data/desk14` are produced by [`DeskCase::write`];
//! `GRIDFLEX_BLESS=1 cargo test -p gridflex bundled` regenerates them.

use crate::grid::{Bus, BusId, GeneratorSpec, Grid, GridSpec, Line, ParseOptions};
use crate::harness::{CompareConfig, SplitConfig};
use crate::opt::{economic_dispatch, LbfgsSettings, SchemeId};
use crate::scenarios::{power_curve, ScenarioConfig, Series, SiteConfig};
use crate::dynamics::SimConfig;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct DeskCase {
    pub horizon: usize,
    pub delta_min: f64,
    /// Load frequency response, fraction of bus load per Hz.
    pub load_damping: f64,
    pub wind_nameplate: f64,
    /// Base speed at the first and last step, m/s.
    pub wind_speed: (f64, f64),
    pub wind_std: f64,
    /// Tie rating above the largest scheduled export, MW.
    pub tie_margin: f64,
    /// Hydro (c1, c2).
    pub hydro_cost: (f64, f64),
    pub pocket_load: f64,
    pub hydro_max: f64,
    /// Hydro ramp limit, MW/min.
    pub hydro_ramp: f64,
    pub scenarios: usize,
    pub n_train: usize,
    pub seed: u64,
}

impl Default for DeskCase {
    fn default() -> Self {
        DeskCase {
            horizon: 12,
            delta_min: 5.0,
            load_damping: 0.005,
            wind_nameplate: 135.0,
            wind_speed: (7.5, 10.8),
            wind_std: 0.6,
            tie_margin: 15.0,
            hydro_cost: (0.004, 22.0),
            pocket_load: 200.0,
            hydro_max: 360.0,
            hydro_ramp: 20.0,
            scenarios: 26,
            n_train: 8,
            seed: 2024,
        }
    }
}

/// Main-area loads, MW, on buses 1..=7.
const MAIN_LOAD: [f64; 7] = [80.0, 60.0, 90.0, 70.0, 60.0, 80.0, 60.0];
/// (hydro bus, wind bus, load bus, main-area tie bus)
const POCKETS: [(usize, usize, usize, usize); 2] = [(8, 9, 10, 2), (11, 12, 13, 5)];
const MAIN_LINES: [(usize, usize); 11] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 4),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 0),
    (0, 4),
    (2, 6),
    (1, 5),
];

impl DeskCase {
    pub fn n_buses(&self) -> usize {
        14
    }

    /// Base load per bus, MW (positive = consumption).
    pub fn bus_load(&self) -> Vec<f64> {
        let mut load = vec![0.0; self.n_buses()];
        load[1..8].copy_from_slice(&MAIN_LOAD);
        for &(_, _, l, _) in &POCKETS {
            load[l] = self.pocket_load;
        }
        load
    }

    pub fn base_speeds(&self) -> Vec<f64> {
        let (a, b) = self.wind_speed;
        (0..=self.horizon)
            .map(|t| a + (b - a) * t as f64 / self.horizon as f64)
            .collect()
    }

    fn base_wind(&self) -> Vec<f64> {
        self.base_speeds()
            .iter()
            .map(|v| self.wind_nameplate * power_curve(*v).expect("default curve"))
            .collect()
    }

    fn network(&self, tie_limit: f64) -> GridSpec {
        let line = |f: usize, t: usize, x: f64, limit: f64| Line {
            from: BusId(f),
            to: BusId(t),
            dynamic_impedance: x,
            thermal_limit: limit,
            nominal_flow: 0.0,
        };
        let mut lines: Vec<Line> = MAIN_LINES.iter().map(|&(f, t)| line(f, t, 0.01, 300.0)).collect();
        for &(h, w, l, tie) in &POCKETS {
            lines.push(line(h, w, 0.005, 400.0));
            lines.push(line(h, l, 0.005, 400.0));
            lines.push(line(h, tie, 0.02, tie_limit));
        }
        let buses = self
            .bus_load()
            .iter()
            .enumerate()
            .map(|(i, p)| Bus {
                id: BusId(i),
                beta_l: 0.0 - self.load_damping * p,
            })
            .collect();
        let thermal = |bus: usize, c1: f64, c2: f64, p_min: f64, p_max: f64, ramp: f64| GeneratorSpec {
            bus: BusId(bus),
            online: true,
            c1,
            c2,
            c3: 0.0,
            p_min,
            p_max,
            ramp_min: -ramp,
            ramp_max: ramp,
            energy_target: None,
        };
        let mut generators = vec![
            thermal(0, 0.004, 22.0, 50.0, 400.0, 4.0),
            thermal(3, 0.010, 30.0, 20.0, 200.0, 8.0),
            thermal(6, 0.012, 32.0, 20.0, 200.0, 8.0),
        ];
        for &(h, ..) in &POCKETS {
            generators.push(thermal(h, self.hydro_cost.0, self.hydro_cost.1, 0.0, self.hydro_max, self.hydro_ramp));
        }
        GridSpec {
            buses,
            lines,
            generators,
            reference_bus: BusId(0),
            base_mva: 100.0,
        }
    }

    /// Economic dispatch of the base forecast. Rows are steps, columns generators.
    pub fn base_schedule(&self) -> Vec<Vec<f64>> {
        let grid = Grid::new(self.network(1e9), &ParseOptions::default()).expect("desk network");
        let wind = self.base_wind();
        let total_load: f64 = self.bus_load().iter().sum();
        (0..=self.horizon)
            .map(|t| economic_dispatch(&grid, total_load - POCKETS.len() as f64 * wind[t]))
            .collect()
    }

    /// Largest scheduled export of any pocket over its tie, MW.
    pub fn peak_export(&self) -> f64 {
        let wind = self.base_wind();
        self.base_schedule()
            .iter()
            .zip(&wind)
            .flat_map(|(row, w)| (0..POCKETS.len()).map(move |i| row[3 + i] + w - self.pocket_load))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn tie_limit(&self) -> f64 {
        (self.peak_export() + self.tie_margin).round()
    }

    /// Network with tie ratings set and energy targets equal to the base
    /// schedule's energy.
    pub fn grid_spec(&self) -> GridSpec {
        let mut spec = self.network(self.tie_limit());
        let schedule = self.base_schedule();
        let h = self.delta_min / 60.0;
        for (k, g) in spec.generators.iter_mut().enumerate() {
            let e: f64 = schedule[..self.horizon].iter().map(|row| row[k] * h).sum();
            g.energy_target = Some(e);
        }
        spec
    }

    /// `t_index,bus_id,value_mw` rows of injected load (negative).
    pub fn load_csv(&self) -> String {
        let mut s = String::from("t_index,bus_id,value_mw\n");
        for t in 0..=self.horizon {
            for (b, p) in self.bus_load().iter().enumerate() {
                if *p != 0.0 {
                    let _ = writeln!(s, "{t},{b},{}", -p);
                }
            }
        }
        s
    }

    /// `t_index,site_id,speed_mps` rows.
    pub fn wind_csv(&self) -> String {
        let mut s = String::from("t_index,site_id,speed_mps\n");
        for (t, v) in self.base_speeds().iter().enumerate() {
            for site in 0..POCKETS.len() {
                let _ = writeln!(s, "{t},{site},{v}");
            }
        }
        s
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            horizon: self.horizon,
            count: self.scenarios,
            seed: None,
            sites: POCKETS
                .iter()
                .map(|&(_, w, ..)| SiteConfig {
                    bus: BusId(w),
                    nameplate: self.wind_nameplate,
                    speeds: None,
                    std: Series::Scalar(self.wind_std),
                })
                .collect(),
            load_csv: PathBuf::from("load.csv"),
            wind_csv: Some(PathBuf::from("wind.csv")),
            power_curve: Default::default(),
            load_noise_std: 0.0,
        }
    }

    pub fn compare_config(&self) -> CompareConfig {
        CompareConfig {
            grid: PathBuf::from("grid.json"),
            aggregate: false,
            scenarios: self.scenario_config(),
            schemes: SchemeId::ALL.to_vec(),
            optimizer: self.optimizer(),
            split: SplitConfig { n_train: self.n_train },
            seed: self.seed,
            simulation: SimConfig {
                delta_min: self.delta_min,
                ..SimConfig::default()
            },
        }
    }

    /// The initial penalties dominate the first gradient, so the stopping
    /// test is absolute.
    pub fn optimizer(&self) -> LbfgsSettings {
        LbfgsSettings {
            max_iterations: 3000,
            tol: 0.0,
            abs_tol: 1e-3,
            ..LbfgsSettings::default()
        }
    }

    /// File name and contents of every bundled data file.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let grid = Grid::new(self.grid_spec(), &ParseOptions::default()).expect("bundled grid is valid");
        let mut scen = self.scenario_config();
        scen.seed = Some(self.seed);
        vec![
            ("grid.json", grid.to_json_string()),
            ("load.csv", self.load_csv()),
            ("wind.csv", self.wind_csv()),
            ("scenarios.json", pretty(&scen)),
            ("compare.json", pretty(&self.compare_config())),
            ("optimizer.json", pretty(&self.optimizer())),
        ]
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in self.files() {
            fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}
