//! Experiment runner behind the command-line tool.
//!
//! Experiment files are flat `key = value` text with `#` comments:
//!
//! ```text
//! P = 2
//! M = 2
//! L = 2
//! N_c = 4
//! K1 = 2
//! modes = realistic, optimistic
//! engines = analytic, montecarlo
//! snr_db_start = 0
//! snr_db_stop = 30
//! snr_db_step = 1
//! output = out/l2
//! ```
//!
//! Each (mode, engine) pair produces `<output>/<mode>_<engine>.csv` with the
//! header `snr_db,outage,stderr,trials,mode,engine,P,M,L`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    analytic_curve, default_window, diversity_slope, highest_decade_above, Engine, OutageCurve,
    OutagePoint, SlopeFit, SnrWindow,
};
use crate::channel::{db_to_linear, Mode, NetworkConfig, OfdmaGrid, TieBreak};
use crate::error::{Error, Result};
use crate::matching::{hall_condition, max_constraint_matching, oracle, BipartiteGraph};
use crate::montecarlo::{sweep, EstimatorConfig};
use crate::protocol::{broadcast_allocate, figure_one_example, relay_decoding};

pub const CSV_HEADER: &str = "snr_db,outage,stderr,trials,mode,engine,P,M,L";

const KNOWN_KEYS: &[&str] = &[
    "P",
    "M",
    "L",
    "N_c",
    "K1",
    "K2",
    "rate_r",
    "R0",
    "tie_break",
    "modes",
    "engines",
    "snr_db_start",
    "snr_db_stop",
    "snr_db_step",
    "trials",
    "master_seed",
    "target_stderr",
    "batch_size",
    "output",
    "dat",
];

/// A parsed experiment file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Network config; its mode is overridden per curve.
    pub network: NetworkConfig,
    pub modes: Vec<Mode>,
    pub engines: Vec<Engine>,
    pub snr_db_start: f64,
    pub snr_db_stop: f64,
    pub snr_db_step: f64,
    pub estimator: EstimatorConfig,
    pub output: PathBuf,
    /// Also write gnuplot-friendly `.dat` files.
    pub dat: bool,
}

struct Fields {
    values: BTreeMap<String, String>,
}

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::config(key, "unknown key"));
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::config(key, "given more than once"));
            }
        }
        Ok(Self { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
            })
            .transpose()
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::config(key, "required key is missing"))
    }

    fn list<T: std::str::FromStr<Err = Error>>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                let items = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| Error::config(key, e.to_string()))
                    })
                    .collect::<Result<Vec<T>>>()?;
                if items.is_empty() {
                    return Err(Error::config(key, "list is empty"));
                }
                Ok(items)
            })
            .transpose()
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let f = Fields::parse(text)?;
        let sources: usize = f.require("P")?;
        let relays: usize = f.require("M")?;
        let blocks: usize = f.require("L")?;
        let per_block: usize = f.require("N_c")?;
        let k1: usize = f.require("K1")?;
        let k2: usize = f.get("K2")?.unwrap_or(k1);
        let rate_r: f64 = f.get("rate_r")?.unwrap_or(1.0);
        let r0: f64 = f.get("R0")?.unwrap_or(1.0);
        let tie_break: TieBreak = match f.raw("tie_break") {
            Some(v) => v.parse()?,
            None => TieBreak::Lexicographic,
        };
        let grid = OfdmaGrid::new(blocks, per_block)?;
        let network =
            NetworkConfig::new(sources, relays, grid, k1, k2, rate_r, Mode::Realistic, r0)?
                .with_tie_break(tie_break);

        let mut modes: Vec<Mode> = f.list("modes")?.unwrap_or_else(|| Mode::ALL.to_vec());
        modes.dedup();
        let mut engines: Vec<Engine> = f.list("engines")?.unwrap_or_else(|| vec![Engine::Analytic]);
        engines.dedup();

        let snr_db_start: f64 = f.require("snr_db_start")?;
        let snr_db_stop: f64 = f.require("snr_db_stop")?;
        let snr_db_step: f64 = f.require("snr_db_step")?;
        if !(snr_db_step > 0.0 && snr_db_step.is_finite()) {
            return Err(Error::config("snr_db_step", "must be positive"));
        }
        if !(snr_db_start < snr_db_stop) {
            return Err(Error::config(
                "snr_db_stop",
                "must be greater than snr_db_start",
            ));
        }

        let mut estimator = EstimatorConfig::new(
            f.get("trials")?.unwrap_or(100_000),
            f.get("master_seed")?.unwrap_or(1),
        )?;
        estimator.target_stderr = f.get("target_stderr")?;
        if let Some(b) = f.get("batch_size")? {
            estimator.batch_size = b;
        }
        estimator.validate()?;

        Ok(Self {
            network,
            modes,
            engines,
            snr_db_start,
            snr_db_stop,
            snr_db_step,
            estimator,
            output: PathBuf::from(f.raw("output").unwrap_or("out")),
            dat: f.get("dat")?.unwrap_or(false),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut spec = Self::parse(&text)?;
        if spec.output.is_relative() {
            if let Some(dir) = path.parent() {
                spec.output = dir.join(&spec.output);
            }
        }
        Ok(spec)
    }

    /// SNR grid in dB: start, start + step, … up to stop inclusive.
    pub fn snr_db_grid(&self) -> Vec<f64> {
        snr_db_grid(self.snr_db_start, self.snr_db_stop, self.snr_db_step)
    }
}

pub fn snr_db_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

/// Computes one curve.
pub fn compute_curve(
    network: &NetworkConfig,
    mode: Mode,
    engine: Engine,
    snr_db: &[f64],
    estimator: &EstimatorConfig,
) -> Result<OutageCurve> {
    let config = network.clone().with_mode(mode);
    let snrs: Vec<f64> = snr_db.iter().map(|&d| db_to_linear(d)).collect();
    match engine {
        Engine::Analytic => analytic_curve(&config, &snrs, mode),
        Engine::MonteCarlo => sweep(&config, &snrs, estimator),
    }
}

/// CSV text for a curve. `snr_db` gives the dB labels of the points.
pub fn curve_to_csv(curve: &OutageCurve, snr_db: &[f64], network: &NetworkConfig) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (p, db) in curve.points().iter().zip(snr_db) {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{},{},{},{},{},{}",
            db,
            p.outage,
            p.stderr,
            p.trials,
            curve.mode,
            curve.engine.as_str(),
            network.sources(),
            network.relays(),
            network.grid().blocks()
        );
    }
    out
}

fn curve_to_dat(curve: &OutageCurve, snr_db: &[f64]) -> String {
    let mut out = String::from("# snr_db outage stderr\n");
    for (p, db) in curve.points().iter().zip(snr_db) {
        let _ = writeln!(out, "{db} {:e} {:e}", p.outage, p.stderr);
    }
    out
}

/// A curve read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvCurve {
    pub snr_db: Vec<f64>,
    pub curve: OutageCurve,
}

pub fn parse_csv(text: &str) -> Result<CsvCurve> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    let mut snr_db = Vec::new();
    let mut points = Vec::new();
    let mut tags: Option<(Mode, Engine)> = None;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 9 {
            return Err(bad(format!("expected 9 columns, got {}", cols.len())));
        }
        let num = |j: usize| {
            cols[j]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number `{}`", cols[j])))
        };
        let db = num(0)?;
        let trials = cols[3]
            .parse::<u64>()
            .map_err(|_| bad(format!("bad trial count `{}`", cols[3])))?;
        let mode: Mode = cols[4].parse().map_err(|e: Error| bad(e.to_string()))?;
        let engine: Engine = cols[5].parse().map_err(|e: Error| bad(e.to_string()))?;
        if tags.is_some_and(|t| t != (mode, engine)) {
            return Err(bad("mixed mode/engine rows in one file".into()));
        }
        tags = Some((mode, engine));
        snr_db.push(db);
        points.push(OutagePoint {
            snr: db_to_linear(db),
            outage: num(1)?,
            stderr: num(2)?,
            trials,
        });
    }
    let (mode, engine) = tags.ok_or(Error::Parse {
        line: 2,
        message: "no data rows".into(),
    })?;
    Ok(CsvCurve {
        snr_db,
        curve: OutageCurve::new(points, mode, engine)?,
    })
}

/// Runs every (mode, engine) pair of `spec`; returns the CSV paths written.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&spec.output)?;
    let snr_db = spec.snr_db_grid();
    let mut written = Vec::new();
    for &mode in &spec.modes {
        for &engine in &spec.engines {
            let curve = compute_curve(&spec.network, mode, engine, &snr_db, &spec.estimator)?;
            let stem = format!("{}_{}", mode, engine.as_str());
            let path = spec.output.join(format!("{stem}.csv"));
            fs::write(&path, curve_to_csv(&curve, &snr_db, &spec.network))?;
            if spec.dat {
                fs::write(
                    spec.output.join(format!("{stem}.dat")),
                    curve_to_dat(&curve, &snr_db),
                )?;
            }
            written.push(path);
        }
    }
    Ok(written)
}

/// Result of `slope` on a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub fit: SlopeFit,
    pub window_db: (f64, f64),
    pub mode: Mode,
    pub engine: Engine,
}

impl SlopeReport {
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "slope": self.fit.slope,
            "residual": self.fit.residual,
            "points": self.fit.points,
            "window_db": [self.window_db.0, self.window_db.1],
            "mode": self.mode.as_str(),
            "engine": self.engine.as_str(),
        })
        .to_string()
    }

    pub fn to_text(&self) -> String {
        format!(
            "slope {:.4}\nresidual {:.3e}\nwindow {:.2}:{:.2} dB ({} points)\n",
            self.fit.slope, self.fit.residual, self.window_db.0, self.window_db.1, self.fit.points
        )
    }
}

/// Fits the diversity slope of a CSV curve. `window_db` defaults to the
/// highest decade with outage in [1e-9, 1e-3].
pub fn slope_report(text: &str, window_db: Option<(f64, f64)>) -> Result<SlopeReport> {
    let parsed = parse_csv(text)?;
    let window = match window_db {
        Some((a, b)) => SnrWindow {
            lo: db_to_linear(a),
            hi: db_to_linear(b),
        },
        None => default_window(&parsed.curve)
            .ok_or_else(|| Error::usage("no points with outage in [1e-9, 1e-3]; pass --window"))?,
    };
    let fit = diversity_slope(&parsed.curve, window)?;
    Ok(SlopeReport {
        window_db: (10.0 * window.lo.log10(), 10.0 * window.hi.log10()),
        fit,
        mode: parsed.curve.mode,
        engine: parsed.curve.engine,
    })
}

/// Parses `a:b` (dB).
pub fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::usage(format!("window `{s}` is not of the form a:b")))?;
    let a: f64 = a
        .trim()
        .parse()
        .map_err(|_| Error::usage(format!("bad window start `{a}`")))?;
    let b: f64 = b
        .trim()
        .parse()
        .map_err(|_| Error::usage(format!("bad window end `{b}`")))?;
    if !(a < b) {
        return Err(Error::usage("window start must be below its end"));
    }
    Ok((a, b))
}

/// One curve of the L-comparison preset.
#[derive(Debug, Clone)]
pub struct Fig2Curve {
    pub blocks: usize,
    pub mode: Mode,
    pub engine: Engine,
    pub snr_db: Vec<f64>,
    pub curve: OutageCurve,
    pub slope: Option<SlopeFit>,
}

/// Settings of the L-comparison preset: P = M = 2, R0 = 1, L ∈ {1, 2, 4}.
#[derive(Debug, Clone)]
pub struct Fig2Settings {
    pub engine: Engine,
    pub snr_db: Vec<f64>,
    pub estimator: EstimatorConfig,
    pub blocks: Vec<usize>,
}

impl Fig2Settings {
    pub fn analytic() -> Self {
        Self {
            engine: Engine::Analytic,
            snr_db: snr_db_grid(-5.0, 60.0, 0.5),
            estimator: EstimatorConfig::new(1, 1).expect("valid"),
            blocks: vec![1, 2, 4],
        }
    }

    pub fn monte_carlo(trials: u64, master_seed: u64) -> Result<Self> {
        Ok(Self {
            engine: Engine::MonteCarlo,
            snr_db: snr_db_grid(0.0, 20.0, 2.0),
            estimator: EstimatorConfig::new(trials, master_seed)?,
            blocks: vec![1, 2, 4],
        })
    }
}

/// Network used by the preset for a given L: P = M = 2, N_c = 4, K1 = K2 = 2.
pub fn fig2_network(blocks: usize) -> Result<NetworkConfig> {
    NetworkConfig::new(
        2,
        2,
        OfdmaGrid::new(blocks, 4)?,
        2,
        2,
        1.0,
        Mode::Realistic,
        1.0,
    )
}

/// Computes the six preset curves.
pub fn fig2(settings: &Fig2Settings) -> Result<Vec<Fig2Curve>> {
    let mut curves = Vec::new();
    for &blocks in &settings.blocks {
        let network = fig2_network(blocks)?;
        for mode in Mode::ALL {
            let curve = compute_curve(
                &network,
                mode,
                settings.engine,
                &settings.snr_db,
                &settings.estimator,
            )?;
            let window = match settings.engine {
                Engine::Analytic => highest_decade_above(&curve, 1e-9),
                Engine::MonteCarlo => crate::analysis::window_in_band(&curve, 1e-5, 1e-1),
            };
            let slope = window.and_then(|w| diversity_slope(&curve, w).ok());
            curves.push(Fig2Curve {
                blocks,
                mode,
                engine: settings.engine,
                snr_db: settings.snr_db.clone(),
                curve,
                slope,
            });
        }
    }
    Ok(curves)
}

/// Writes `<out>/L<l>/<mode>_<engine>.csv` for every preset curve.
pub fn write_fig2(curves: &[Fig2Curve], out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for c in curves {
        let dir = out.join(format!("L{}", c.blocks));
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}_{}.csv", c.mode, c.engine.as_str()));
        fs::write(
            &path,
            curve_to_csv(&c.curve, &c.snr_db, &fig2_network(c.blocks)?),
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Human-readable summary: slopes and the realistic/optimistic ratio at
/// `ratio_db`.
pub fn fig2_summary(curves: &[Fig2Curve], ratio_db: f64) -> String {
    let mut out = String::from("L  mode        slope   outage@ref\n");
    for c in curves {
        let at = c
            .snr_db
            .iter()
            .position(|d| (d - ratio_db).abs() < 1e-9)
            .map(|i| c.curve.points()[i].outage);
        let _ = writeln!(
            out,
            "{:<2} {:<11} {:>6}  {}",
            c.blocks,
            c.mode.as_str(),
            c.slope.map_or("-".into(), |f| format!("{:.3}", f.slope)),
            at.map_or("-".into(), |v| format!("{v:.3e}"))
        );
    }
    let _ = writeln!(out, "realistic/optimistic ratio at {ratio_db} dB:");
    for pair in curves.chunks(2) {
        if let [r, o] = pair {
            let i = r.snr_db.iter().position(|d| (d - ratio_db).abs() < 1e-9);
            if let Some(i) = i {
                let (a, b) = (r.curve.points()[i].outage, o.curve.points()[i].outage);
                let ratio = if b > 0.0 {
                    format!("{:.4e}", a / b)
                } else {
                    "inf".into()
                };
                let _ = writeln!(out, "  L={}: {ratio}", r.blocks);
            }
        }
    }
    out
}

/// Result of a successful self-test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelftestReport {
    pub graphs: usize,
    pub hall_holds: usize,
}

/// Matching vs brute-force oracle on `graphs` random graphs, plus the
/// four-user relay example. Returns the first failing case as an error.
pub fn selftest(graphs: usize, seed: u64) -> std::result::Result<SelftestReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hall_holds = 0;
    for case in 0..graphs {
        let users = rng.random_range(1..=6);
        let subcarriers = rng.random_range(1..=12);
        let k = rng.random_range(1..=2);
        let density: f64 = rng.random_range(0.15..0.85);
        let mut g = BipartiteGraph::new(users, subcarriers);
        for u in 0..users {
            for s in 0..subcarriers {
                if rng.random_bool(density) {
                    g.add_edge(u, s).map_err(|e| e.to_string())?;
                }
            }
        }
        let describe = || format!("case {case}: K={k}\n{}", g.dump());
        let m = max_constraint_matching(&g, k).map_err(|e| format!("{}: {e}", describe()))?;
        m.validate(&g)
            .map_err(|e| format!("{}: invalid matching: {e}", describe()))?;
        let best = oracle::max_saturable(&g, k);
        if m.saturated_count() != best {
            return Err(format!(
                "{}: matching saturates {} users, oracle {best}",
                describe(),
                m.saturated_count()
            ));
        }
        let hall = hall_condition(&g, k).map_err(|e| e.to_string())?;
        if hall.holds != (best == users) {
            return Err(format!(
                "{}: Hall condition {} but oracle saturates {best}",
                describe(),
                hall.holds
            ));
        }
        if hall.holds {
            hall_holds += 1;
        }
    }

    let (real, config) = figure_one_example();
    let alloc = broadcast_allocate(&real, &config).map_err(|e| e.to_string())?;
    if alloc.matching().saturated_count() != 4 {
        return Err("four-user example: destination does not saturate every user".into());
    }
    let table = relay_decoding(&real, &config, &alloc).map_err(|e| e.to_string())?;
    if table != vec![vec![true, false, true, true]] {
        return Err(format!(
            "four-user example: relay decoding {table:?}, expected only u2 lost"
        ));
    }
    Ok(SelftestReport { graphs, hall_holds })
}
