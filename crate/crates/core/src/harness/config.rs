//! Experiment configuration: defaults, a flat `key=value` config-file format,
//! and a canonical rendering used for the config hash.

use std::path::Path;
use std::str::FromStr;

use crate::domain::Method;
use crate::error::{Error, Result};
use crate::harness::io::digest_bytes;
use crate::harness::synth::{MixtureSpec, NormSkewSpec};
use crate::ipgraph::GraphMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfMode {
    Als,
}

impl MfMode {
    pub fn tag(&self) -> &'static str {
        match self {
            MfMode::Als => "als",
        }
    }
}

impl FromStr for MfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "als" => Ok(MfMode::Als),
            other => Err(Error::invalid(format!("unknown mf mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub k: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub mode: GraphMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfParams {
    pub epochs: usize,
    pub lambda: f64,
    pub mode: MfMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullParams {
    pub num_directions: usize,
}

/// Synthetic-instance parameters used when `run` generates its own data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_items: usize,
    pub n_users: usize,
    pub n_cold_users: usize,
    pub mixture: MixtureSpec,
    pub skew: NormSkewSpec,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_items: 2000,
            n_users: 1000,
            n_cold_users: 250,
            mixture: MixtureSpec::default(),
            skew: NormSkewSpec { sigma: 0.3 },
        }
    }
}

/// Full experiment configuration. Every field maps to a `key=value` config
/// line and to a CLI flag of the same name.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m_grid: Vec<usize>,
    pub dim: usize,
    pub split_ratio: (u32, u32),
    pub seed: u64,
    pub methods: Vec<Method>,
    pub graph: GraphParams,
    pub mf: MfParams,
    pub hull: HullParams,
    pub synth: SynthParams,
    /// Run method selections concurrently. Affects timings only, never values.
    pub parallel_methods: bool,
    /// Budget for the exhaustive oracle when the method set includes it.
    pub subset_budget: u128,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m_grid: vec![5, 20, 50, 100, 200],
            dim: 32,
            split_ratio: (4, 1),
            seed: 42,
            methods: vec![
                Method::MaxNorm,
                Method::MaxInDegree,
                Method::UserExpectation,
                Method::Ipgs,
                Method::IpgsExact,
                Method::Greedy,
                Method::Hull,
            ],
            graph: GraphParams {
                k: 10,
                ef_construction: 200,
                ef_search: 200,
                mode: GraphMode::Approximate,
            },
            mf: MfParams {
                epochs: 20,
                lambda: 0.1,
                mode: MfMode::Als,
            },
            hull: HullParams {
                num_directions: 1000,
            },
            synth: SynthParams::default(),
            parallel_methods: false,
            subset_budget: crate::oracle::DEFAULT_SUBSET_BUDGET,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() {
            return Err(Error::invalid("m_grid must not be empty"));
        }
        if self.m_grid.iter().any(|&m| m == 0) {
            return Err(Error::invalid("m_grid values must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if self.split_ratio.0 == 0 || self.split_ratio.1 == 0 {
            return Err(Error::invalid("split ratio parts must be positive"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("method set must not be empty"));
        }
        if self.graph.k == 0 || self.graph.ef_construction == 0 || self.graph.ef_search == 0 {
            return Err(Error::invalid("graph parameters must be positive"));
        }
        if self.hull.num_directions == 0 {
            return Err(Error::invalid("hull num_directions must be positive"));
        }
        if !(self.mf.lambda >= 0.0) {
            return Err(Error::invalid("mf lambda must be non-negative"));
        }
        Ok(())
    }

    /// Canonical `key=value` rendering, sorted by key; the config hash is the
    /// SHA-256 of these lines.
    pub fn canonical_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!(
                "m_grid={}",
                self.m_grid
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!("dim={}", self.dim),
            format!("split_ratio={}:{}", self.split_ratio.0, self.split_ratio.1),
            format!("seed={}", self.seed),
            format!(
                "methods={}",
                self.methods
                    .iter()
                    .map(|m| m.tag().to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!("graph.k={}", self.graph.k),
            format!("graph.ef_construction={}", self.graph.ef_construction),
            format!("graph.ef_search={}", self.graph.ef_search),
            format!("graph.mode={}", self.graph.mode.tag()),
            format!("mf.epochs={}", self.mf.epochs),
            format!("mf.lambda={}", self.mf.lambda),
            format!("mf.mode={}", self.mf.mode.tag()),
            format!("hull.num_directions={}", self.hull.num_directions),
            format!("synth.n_items={}", self.synth.n_items),
            format!("synth.n_users={}", self.synth.n_users),
            format!("synth.n_cold_users={}", self.synth.n_cold_users),
            format!("synth.clusters={}", self.synth.mixture.clusters),
            format!("synth.center_scale={}", self.synth.mixture.center_scale),
            format!("synth.spread={}", self.synth.mixture.spread),
            format!("synth.norm_skew={}", self.synth.skew.sigma),
            format!("parallel_methods={}", self.parallel_methods),
            format!("subset_budget={}", self.subset_budget),
        ];
        lines.sort();
        lines
    }

    pub fn config_hash(&self) -> String {
        digest_bytes(self.canonical_lines().join("\n").as_bytes())
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::invalid(format!("bad value {value:?} for {what}"));
        match key {
            "m_grid" => {
                self.m_grid = value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().map_err(|_| bad("m_grid")))
                    .collect::<Result<_>>()?;
            }
            "dim" => self.dim = value.parse().map_err(|_| bad("dim"))?,
            "split_ratio" => {
                let (a, b) = value
                    .split_once(':')
                    .ok_or_else(|| bad("split_ratio (expected a:b)"))?;
                self.split_ratio = (
                    a.trim().parse().map_err(|_| bad("split_ratio"))?,
                    b.trim().parse().map_err(|_| bad("split_ratio"))?,
                );
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(|v| v.trim().parse::<Method>())
                    .collect::<Result<_>>()?;
            }
            "graph.k" => self.graph.k = value.parse().map_err(|_| bad("graph.k"))?,
            "graph.ef_construction" => {
                self.graph.ef_construction =
                    value.parse().map_err(|_| bad("graph.ef_construction"))?
            }
            "graph.ef_search" => {
                self.graph.ef_search = value.parse().map_err(|_| bad("graph.ef_search"))?
            }
            "graph.mode" => self.graph.mode = value.parse()?,
            "mf.epochs" => self.mf.epochs = value.parse().map_err(|_| bad("mf.epochs"))?,
            "mf.lambda" => self.mf.lambda = value.parse().map_err(|_| bad("mf.lambda"))?,
            "mf.mode" => self.mf.mode = value.parse()?,
            "hull.num_directions" => {
                self.hull.num_directions =
                    value.parse().map_err(|_| bad("hull.num_directions"))?
            }
            "synth.n_items" => {
                self.synth.n_items = value.parse().map_err(|_| bad("synth.n_items"))?
            }
            "synth.n_users" => {
                self.synth.n_users = value.parse().map_err(|_| bad("synth.n_users"))?
            }
            "synth.n_cold_users" => {
                self.synth.n_cold_users =
                    value.parse().map_err(|_| bad("synth.n_cold_users"))?
            }
            "synth.clusters" => {
                self.synth.mixture.clusters =
                    value.parse().map_err(|_| bad("synth.clusters"))?
            }
            "synth.center_scale" => {
                self.synth.mixture.center_scale =
                    value.parse().map_err(|_| bad("synth.center_scale"))?
            }
            "synth.spread" => {
                self.synth.mixture.spread = value.parse().map_err(|_| bad("synth.spread"))?
            }
            "synth.norm_skew" => {
                self.synth.skew.sigma = value.parse().map_err(|_| bad("synth.norm_skew"))?
            }
            "parallel_methods" => {
                self.parallel_methods = value.parse().map_err(|_| bad("parallel_methods"))?
            }
            "subset_budget" => {
                self.subset_budget = value.parse().map_err(|_| bad("subset_budget"))?
            }
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key=value` config file (`#` comments, blank lines
    /// allowed) on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        config.apply_file(path)?;
        Ok(config)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Parses `key=value` override pairs (e.g. from repeated CLI flags).
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for pair in pairs {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got {pair:?}")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// A convenience preset small enough for quick synthetic runs and tests.
    pub fn desk_default() -> Self {
        let mut c = Self::default();
        c.m_grid = vec![5, 10, 20];
        c.dim = 8;
        c.synth = SynthParams {
            n_items: 300,
            n_users: 120,
            n_cold_users: 30,
            mixture: MixtureSpec::default(),
            skew: NormSkewSpec { sigma: 0.3 },
        };
        c.graph = GraphParams {
            k: 8,
            ef_construction: 80,
            ef_search: 80,
            mode: GraphMode::Approximate,
        };
        c.hull = HullParams {
            num_directions: 400,
        };
        c
    }
}
