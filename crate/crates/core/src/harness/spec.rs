//! Experiment specifications in flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. List values are comma
//! separated. Unknown or repeated keys are errors. Every key has a default, so
//! a specification only lists what differs from it.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `kind` | `sweep` | `sweep`, `dnc` or `trainsim` |
//! | `seed` | `0` | master seed |
//! | `trials` | `10` | repetitions per grid point |
//! | `n` | `100` | samples per set (sweep, dnc) |
//! | `dims` | `1000,4000,16000` | dimensions (sweep); the first is used by dnc and trainsim |
//! | `eps` | `0.2` | corruption fraction |
//! | `chunk_size` | `1000` | chunk width `m` of the spectral aggregators |
//! | `k` | `√20` | threshold multiplier |
//! | `sigma_max_sq` | largest profile variance | `σ_max²` used by the threshold |
//! | `attack` | `hidra` | `hidra`, `signflip` or `none` (sweep, trainsim) |
//! | `aggregator` | `filtering` | `mean`, `median`, `trimmed`, `krum`, `filtering`, `noregret`, `dnc` |
//! | `profile` | `logspaced` | `spherical` or `logspaced` benign standard deviations |
//! | `sigma` | `1e-3` | standard deviation of the spherical profile |
//! | `sigma_min`, `sigma_max` | `1e-4`, `3.1622776601683794e-3` | range of the log-spaced profile |
//! | `profile_scope` | `chunk` | `chunk` repeats the profile in every chunk; `global` spreads it over all of `d` |
//! | `benign_mean` | `1e-3` | mean of every benign coordinate |
//! | `delta` | `0` | attack magnitude slack |
//! | `knowledge` | `full` | `full` or `partial` |
//! | `visible_fraction` | `0.5` | share of samples visible under partial knowledge |
//! | `selection` | `first` | corrupted indices: `first` or `random` |
//! | `flip_scale` | `1` | sign-flip multiplier |
//! | `betas` | `5,10,20,40,80` | attack strengths (dnc) |
//! | `c` | `0.02` | group scale of the binary attack (dnc) |
//! | `dims_sampled` | `min(d, 1000)` | coordinates sampled by the DnC aggregator |
//! | `clients` | `50` | simulated clients (trainsim) |
//! | `rounds` | `100` | training rounds |
//! | `lr` | `0.1` | learning rate |
//! | `batch` | `10` | minibatch per client per round |
//! | `shard_size` | `200` | training samples per client |
//! | `test_size` | `2000` | held-out samples |
//! | `separation` | `4` | distance between class means |
//! | `threshold` | `oracle` | `oracle` sets `σ_max²` each round to the largest per-chunk spectral norm of the honest gradients; `fixed` uses `sigma_max_sq` |

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::aggregators::{Aggregator, DEFAULT_K};
use crate::attacks::IndexSelection;
use crate::datagen::VarianceProfile;
use crate::error::{Error, Result};

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::invalid(format!(
                        "unknown {} `{s}`", stringify!($name).to_lowercase()
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

keyword_enum!(
    /// Which experiment a specification describes.
    ExperimentKind { Sweep => "sweep", Dnc => "dnc", TrainSim => "trainsim" }
);
keyword_enum!(
    /// Attack used by sweeps and training runs.
    AttackKind { Hidra => "hidra", SignFlip => "signflip", None => "none" }
);
keyword_enum!(
    /// Named benign variance profile.
    ProfileKind { Spherical => "spherical", LogSpaced => "logspaced" }
);
keyword_enum!(
    /// Whether the variance profile repeats per chunk or spans all coordinates.
    ProfileScope { Chunk => "chunk", Global => "global" }
);
keyword_enum!(
    /// Attacker knowledge of the benign samples.
    KnowledgeKind { Full => "full", Partial => "partial" }
);
keyword_enum!(
    /// How a training run sets `σ_max²` each round.
    ThresholdMode { Oracle => "oracle", Fixed => "fixed" }
);

/// A parsed experiment specification.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub trials: usize,
    pub n: usize,
    pub dims: Vec<usize>,
    pub eps: f64,
    pub chunk_size: usize,
    pub k: f64,
    pub sigma_max_sq: Option<f64>,
    pub attack: AttackKind,
    pub aggregator: Aggregator,
    pub profile: ProfileKind,
    pub sigma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub profile_scope: ProfileScope,
    pub benign_mean: f64,
    pub delta: f64,
    pub knowledge: KnowledgeKind,
    pub visible_fraction: f64,
    pub selection: IndexSelection,
    pub flip_scale: f64,
    pub betas: Vec<f64>,
    pub c: f64,
    pub dims_sampled: Option<usize>,
    pub clients: usize,
    pub rounds: usize,
    pub lr: f64,
    pub batch: usize,
    pub shard_size: usize,
    pub test_size: usize,
    pub separation: f64,
    pub threshold: ThresholdMode,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Sweep,
            seed: 0,
            trials: 10,
            n: 100,
            dims: vec![1000, 4000, 16000],
            eps: 0.2,
            chunk_size: 1000,
            k: DEFAULT_K,
            sigma_max_sq: None,
            attack: AttackKind::Hidra,
            aggregator: Aggregator::Filtering,
            profile: ProfileKind::LogSpaced,
            sigma: 1e-3,
            sigma_min: 1e-4,
            sigma_max: 1e-5f64.sqrt(),
            profile_scope: ProfileScope::Chunk,
            benign_mean: 1e-3,
            delta: 0.0,
            knowledge: KnowledgeKind::Full,
            visible_fraction: 0.5,
            selection: IndexSelection::First,
            flip_scale: 1.0,
            betas: vec![5.0, 10.0, 20.0, 40.0, 80.0],
            c: 0.02,
            dims_sampled: None,
            clients: 50,
            rounds: 100,
            lr: 0.1,
            batch: 10,
            shard_size: 200,
            test_size: 2000,
            separation: 4.0,
            threshold: ThresholdMode::Oracle,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("cannot parse `{value}` for key `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

impl ExperimentSpec {
    /// Parses `key = value` lines over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::invalid(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            spec.set(key, value)
                .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "kind" => self.kind = v.parse()?,
            "seed" => self.seed = parse_value(key, v)?,
            "trials" => self.trials = parse_value(key, v)?,
            "n" => self.n = parse_value(key, v)?,
            "dims" => self.dims = parse_list(key, v)?,
            "eps" => self.eps = parse_value(key, v)?,
            "chunk_size" => self.chunk_size = parse_value(key, v)?,
            "k" => self.k = parse_value(key, v)?,
            "sigma_max_sq" => self.sigma_max_sq = Some(parse_value(key, v)?),
            "attack" => self.attack = v.parse()?,
            "aggregator" => self.aggregator = v.parse()?,
            "profile" => self.profile = v.parse()?,
            "sigma" => self.sigma = parse_value(key, v)?,
            "sigma_min" => self.sigma_min = parse_value(key, v)?,
            "sigma_max" => self.sigma_max = parse_value(key, v)?,
            "profile_scope" => self.profile_scope = v.parse()?,
            "benign_mean" => self.benign_mean = parse_value(key, v)?,
            "delta" => self.delta = parse_value(key, v)?,
            "knowledge" => self.knowledge = v.parse()?,
            "visible_fraction" => self.visible_fraction = parse_value(key, v)?,
            "selection" => {
                self.selection = match v {
                    "first" => IndexSelection::First,
                    "random" => IndexSelection::Random,
                    _ => return Err(Error::invalid(format!("unknown selection `{v}`"))),
                }
            }
            "flip_scale" => self.flip_scale = parse_value(key, v)?,
            "betas" => self.betas = parse_list(key, v)?,
            "c" => self.c = parse_value(key, v)?,
            "dims_sampled" => self.dims_sampled = Some(parse_value(key, v)?),
            "clients" => self.clients = parse_value(key, v)?,
            "rounds" => self.rounds = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "batch" => self.batch = parse_value(key, v)?,
            "shard_size" => self.shard_size = parse_value(key, v)?,
            "test_size" => self.test_size = parse_value(key, v)?,
            "separation" => self.separation = parse_value(key, v)?,
            "threshold" => self.threshold = v.parse()?,
            _ => return Err(Error::invalid(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Checks ranges and cross-field consistency.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::invalid(msg.to_owned()));
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return fail("dims must list positive dimensions");
        }
        if !(0.0..0.5).contains(&self.eps) {
            return fail("eps must lie in [0, 0.5)");
        }
        if self.chunk_size == 0 {
            return fail("chunk_size must be positive");
        }
        crate::aggregators::ThresholdConfig::new(self.sigma_max_sq.unwrap_or(1.0), self.k)?;
        if self.n < 2 {
            return fail("n must be at least 2");
        }
        self.variance_profile().stds(self.chunk_size.min(self.dims[0]))?;
        if !(self.visible_fraction > 0.0 && self.visible_fraction <= 1.0) {
            return fail("visible_fraction must lie in (0, 1]");
        }
        if !(self.delta >= 0.0 && self.flip_scale > 0.0) {
            return fail("delta must be nonnegative and flip_scale positive");
        }
        if self.kind == ExperimentKind::Dnc && (self.betas.is_empty() || self.betas.iter().any(|b| *b < 0.0)) {
            return fail("betas must be a nonempty list of nonnegative values");
        }
        if self.kind == ExperimentKind::TrainSim {
            if self.clients < 2 || self.rounds == 0 || self.batch == 0 || self.test_size == 0 {
                return fail("trainsim needs clients >= 2 and positive rounds, batch, test_size");
            }
            if self.batch > self.shard_size {
                return fail("batch cannot exceed shard_size");
            }
            if self.threshold == ThresholdMode::Fixed && self.sigma_max_sq.is_none() {
                return fail("threshold = fixed requires sigma_max_sq");
            }
        }
        Ok(())
    }

    /// The named benign variance profile.
    pub fn variance_profile(&self) -> VarianceProfile {
        match self.profile {
            ProfileKind::Spherical => VarianceProfile::Spherical(self.sigma),
            ProfileKind::LogSpaced => VarianceProfile::LogSpaced { min: self.sigma_min, max: self.sigma_max },
        }
    }

    /// Per-coordinate standard deviations for dimension `d`.
    pub fn stds(&self, d: usize) -> Result<Vec<f64>> {
        let profile = self.variance_profile();
        match self.profile_scope {
            ProfileScope::Chunk => profile.tiled(d, self.chunk_size),
            ProfileScope::Global => profile.stds(d),
        }
    }
}
