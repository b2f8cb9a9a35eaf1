//! Scenario files and the builtin scenarios.
//!
//! A scenario lists the true scatterers as `(index, modulus, phase)` triples,
//! optional parasitic scatterers that are part of the truth but not of the
//! leakage-broadened initial guess, the leakage settings and the filter
//! configuration. Grid indices are either flat row-major (`q1·n2 + q2`) or
//! `[q1, q2]` pairs.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use phase_kalman::{
    build_initial_guess, c64, AmplitudeVector, FilterConfig, GammaSchedule, GridShape, LeakageSpec,
    SensorFamily,
};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const BUILTINS: [&str; 4] = ["paper-1d", "paper-2d", "paper-2d-noparasitic", "paper-2d-random"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Chain1d,
    Grid2d,
    Random2d,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dims {
    Chain { n: usize },
    Grid { n1: usize, n2: usize },
}

impl Dims {
    pub fn shape(&self) -> Result<GridShape> {
        let shape = match *self {
            Dims::Chain { n } => GridShape::chain(n),
            Dims::Grid { n1, n2 } => GridShape::new(n1, n2),
        };
        shape.map_err(|e| CliError::Config(format!("dims: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteIndex {
    Flat(usize),
    Grid([usize; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteEntry {
    pub index: SiteIndex,
    pub modulus: f64,
    /// Radians.
    pub phase: f64,
}

impl SiteEntry {
    fn flat(index: usize, modulus: f64, phase: f64) -> Self {
        Self {
            index: SiteIndex::Flat(index),
            modulus,
            phase,
        }
    }

    fn grid(q1: usize, q2: usize, modulus: f64) -> Self {
        Self {
            index: SiteIndex::Grid([q1, q2]),
            modulus,
            phase: 0.0,
        }
    }
}

/// Seeded random real scatterers with moduli uniform in
/// `[min_modulus, max_modulus)` at distinct positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomEntries {
    pub count: usize,
    pub min_modulus: f64,
    pub max_modulus: f64,
    /// Rescale the drawn amplitudes to unit ℓ2 norm.
    #[serde(default)]
    pub normalize: bool,
}

/// Leakage broadening of the initial guess; the support is the set of
/// scatterer entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageSettings {
    pub shift: f64,
    pub modulus_scale: f64,
    pub phase_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub kind: ScenarioKind,
    pub dims: Dims,
    #[serde(default = "one")]
    pub multiplicity: u32,
    #[serde(default)]
    pub entries: Vec<SiteEntry>,
    #[serde(default)]
    pub parasitics: Vec<SiteEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomEntries>,
    pub leakage: LeakageSettings,
    pub filter: FilterConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn one() -> u32 {
    1
}

/// A scenario resolved into vectors ready for reconstruction.
#[derive(Debug, Clone)]
pub struct Problem {
    pub shape: GridShape,
    /// Scatterers plus parasitics.
    pub truth: AmplitudeVector,
    /// Flat indices of the scatterers (without parasitics).
    pub scatterers: Vec<usize>,
    pub parasitics: Vec<usize>,
    pub x0: AmplitudeVector,
    pub sensors: SensorFamily,
    pub measured: Vec<f64>,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn resolve(&self, index: SiteIndex, shape: GridShape) -> Result<usize> {
        let flat = match index {
            SiteIndex::Flat(i) => i,
            SiteIndex::Grid([q1, q2]) => {
                if q1 >= shape.n1 || q2 >= shape.n2 {
                    return Err(CliError::Config(format!(
                        "site [{q1}, {q2}] outside the {}×{} grid",
                        shape.n1, shape.n2
                    )));
                }
                shape.flat_index(q1, q2)
            }
        };
        if flat >= shape.len() {
            return Err(CliError::Config(format!("site {flat} outside a grid of {} sites", shape.len())));
        }
        Ok(flat)
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.dims.shape()?;
        match (self.kind, self.dims) {
            (ScenarioKind::Chain1d, Dims::Grid { .. }) => {
                return Err(CliError::Config("chain_1d needs dims {\"n\": …}".into()))
            }
            (ScenarioKind::Grid2d | ScenarioKind::Random2d, Dims::Chain { .. }) => {
                return Err(CliError::Config("2D scenarios need dims {\"n1\": …, \"n2\": …}".into()))
            }
            _ => {}
        }
        if self.multiplicity == 0 {
            return Err(CliError::Config("multiplicity must be at least 1".into()));
        }
        match (self.kind, &self.random) {
            (ScenarioKind::Random2d, None) => {
                return Err(CliError::Config("random_2d needs a `random` block".into()))
            }
            (ScenarioKind::Random2d, Some(r)) => {
                if !self.entries.is_empty() {
                    return Err(CliError::Config("random_2d draws its entries; `entries` must be empty".into()));
                }
                if r.count == 0 || r.count > shape.len() {
                    return Err(CliError::Config(format!("random count {} not in 1..={}", r.count, shape.len())));
                }
                if !(r.min_modulus > 0.0 && r.min_modulus < r.max_modulus && r.max_modulus.is_finite()) {
                    return Err(CliError::Config("random moduli need 0 < min_modulus < max_modulus".into()));
                }
            }
            (_, Some(_)) => return Err(CliError::Config("only random_2d takes a `random` block".into())),
            (_, None) => {
                if self.entries.is_empty() {
                    return Err(CliError::Config("at least one scatterer entry is required".into()));
                }
            }
        }
        if self.random.is_some() && self.seed.is_none() {
            return Err(CliError::Config("a seed is required when entries are drawn at random".into()));
        }
        let mut seen = BTreeSet::new();
        for e in self.entries.iter().chain(&self.parasitics) {
            let flat = self.resolve(e.index, shape)?;
            if !seen.insert(flat) {
                return Err(CliError::Config(format!("site {flat} listed twice")));
            }
            if !(e.modulus > 0.0 && e.modulus.is_finite() && e.phase.is_finite()) {
                return Err(CliError::Config(format!("site {flat}: modulus must be positive, phase finite")));
            }
        }
        let l = &self.leakage;
        if !(0.0..1.0).contains(&l.shift) {
            return Err(CliError::Config(format!("leakage shift {} not in [0, 1)", l.shift)));
        }
        if !(l.modulus_scale > 0.0 && l.phase_scale > 0.0 && l.modulus_scale.is_finite() && l.phase_scale.is_finite()) {
            return Err(CliError::Config("leakage scales must be positive".into()));
        }
        self.filter
            .validate()
            .map_err(|e| CliError::Config(format!("filter: {e}")))
    }

    /// Scatterer entries as `(flat index, amplitude)`, drawing them first for
    /// random scenarios.
    fn scatterer_amplitudes(&self, shape: GridShape) -> Result<Vec<(usize, c64)>> {
        if let Some(r) = &self.random {
            let seed = self.seed.ok_or_else(|| CliError::Config("missing seed".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sites: Vec<usize> = sample(&mut rng, shape.len(), r.count).into_vec();
            sites.sort_unstable();
            let mut values: Vec<f64> = sites
                .iter()
                .map(|_| rng.random_range(r.min_modulus..r.max_modulus))
                .collect();
            if r.normalize {
                let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                values.iter_mut().for_each(|v| *v /= norm);
            }
            return Ok(sites.into_iter().zip(values).map(|(i, v)| (i, c64::new(v, 0.0))).collect());
        }
        self.entries
            .iter()
            .map(|e| Ok((self.resolve(e.index, shape)?, c64::from_polar(e.modulus, e.phase))))
            .collect()
    }

    pub fn materialize(&self) -> Result<Problem> {
        self.validate()?;
        let shape = self.dims.shape()?;
        let n = shape.len();
        let scatterers = self.scatterer_amplitudes(shape)?;

        let mut sparse = vec![c64::new(0.0, 0.0); n];
        for &(i, a) in &scatterers {
            sparse[i] = a;
        }
        let sparse = AmplitudeVector::new(sparse);
        let mut truth = sparse.as_slice().to_vec();
        let mut parasitics = Vec::with_capacity(self.parasitics.len());
        for e in &self.parasitics {
            let i = self.resolve(e.index, shape)?;
            truth[i] = c64::from_polar(e.modulus, e.phase);
            parasitics.push(i);
        }
        let truth = AmplitudeVector::new(truth);

        let leakage = LeakageSpec {
            support: sparse.support(),
            shift: self.leakage.shift,
            modulus_scale: self.leakage.modulus_scale,
            phase_scale: self.leakage.phase_scale,
        };
        let x0 = build_initial_guess(&sparse, &leakage).map_err(|e| CliError::Config(format!("leakage: {e}")))?;
        let sensors = SensorFamily::grid(shape, self.multiplicity as f64)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let measured = sensors
            .intensities(truth.as_slice())
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Problem {
            shape,
            truth,
            scatterers: scatterers.iter().map(|&(i, _)| i).collect(),
            parasitics,
            x0,
            sensors,
            measured,
        })
    }
}

/// Positions of the six `paper-1d` scatterers: consecutive sites in the
/// middle of the chain.
pub const PAPER_1D_SITES: [usize; 6] = [56, 57, 58, 59, 60, 61];

pub fn paper_1d_phases() -> [f64; 6] {
    [-PI / 3.0, -PI / 6.0, 0.0, PI / 6.0, PI / 3.0, PI / 2.0]
}

fn paper_leakage() -> LeakageSettings {
    LeakageSettings {
        shift: 0.3,
        modulus_scale: 0.6,
        phase_scale: 1.1,
    }
}

/// 5×5 block in rows 3..8, columns 10..15: 0.12 in the center, 0.28 on
/// the inner ring, 0.56 on the outer ring.
fn paper_2d_block() -> Vec<SiteEntry> {
    let mut out = Vec::with_capacity(25);
    for i in 0..5usize {
        for j in 0..5usize {
            let ring = i.abs_diff(2).max(j.abs_diff(2));
            let modulus = [0.12, 0.28, 0.56][ring];
            out.push(SiteEntry::grid(3 + i, 10 + j, modulus));
        }
    }
    out
}

pub fn builtin(name: &str) -> Result<ScenarioSpec> {
    let spec = match name {
        "paper-1d" => ScenarioSpec {
            name: name.into(),
            kind: ScenarioKind::Chain1d,
            dims: Dims::Chain { n: 117 },
            multiplicity: 1,
            entries: PAPER_1D_SITES
                .iter()
                .zip(paper_1d_phases())
                .map(|(&i, ph)| SiteEntry::flat(i, 1.0, ph))
                .collect(),
            parasitics: vec![SiteEntry::flat(5, 0.23, 0.0), SiteEntry::flat(110, 0.42, 0.0)],
            random: None,
            leakage: paper_leakage(),
            filter: FilterConfig::chain_default(),
            seed: None,
        },
        "paper-2d" => ScenarioSpec {
            name: name.into(),
            kind: ScenarioKind::Grid2d,
            dims: Dims::Grid { n1: 12, n2: 25 },
            multiplicity: 1,
            entries: paper_2d_block(),
            parasitics: vec![SiteEntry::grid(0, 2, 0.23), SiteEntry::grid(11, 22, 0.42)],
            random: None,
            leakage: paper_leakage(),
            filter: FilterConfig::grid_default(),
            seed: None,
        },
        "paper-2d-noparasitic" => ScenarioSpec {
            name: name.into(),
            parasitics: Vec::new(),
            filter: FilterConfig {
                schedule: GammaSchedule { a: 0.17, b: 0.0012 },
                max_iter: 5000,
                ..FilterConfig::grid_default()
            },
            ..builtin("paper-2d")?
        },
        "paper-2d-random" => ScenarioSpec {
            name: name.into(),
            kind: ScenarioKind::Random2d,
            dims: Dims::Grid { n1: 12, n2: 25 },
            multiplicity: 1,
            entries: Vec::new(),
            parasitics: Vec::new(),
            random: Some(RandomEntries {
                count: 25,
                min_modulus: 0.1,
                max_modulus: 1.0,
                normalize: true,
            }),
            leakage: paper_leakage(),
            filter: FilterConfig {
                schedule: GammaSchedule { a: 0.17, b: 0.0058 },
                max_iter: 1000,
                ..FilterConfig::grid_default()
            },
            seed: Some(25),
        },
        other => return Err(CliError::UnknownScenario(other.into())),
    };
    Ok(spec)
}
