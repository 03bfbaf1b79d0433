//! Experiment configuration, manifests and model loading.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use seqdec_core::fixtures::model_seed;
use seqdec_core::{generate_synthetic, CharNGramLM, PrefixTableModel, ScoreConfig, SyntheticConfig};

pub const MANIFEST_VERSION: u32 = 1;

/// A decoding technique compared in a strategy sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    EosGate,
    LengthBonus,
    Coverage,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::EosGate, Strategy::LengthBonus, Strategy::Coverage];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::EosGate => "eos-gate",
            Strategy::LengthBonus => "length-bonus",
            Strategy::Coverage => "coverage",
        }
    }

    /// `base` with this technique switched on and the other two off.
    pub fn apply(self, base: &ScoreConfig, axes: &SweepAxes) -> ScoreConfig {
        let mut cfg = ScoreConfig {
            eos_gate: false,
            length_bonus: 0.0,
            coverage_weight: 0.0,
            ..base.clone()
        };
        match self {
            Strategy::EosGate => cfg.eos_gate = true,
            Strategy::LengthBonus => cfg.length_bonus = axes.length_bonus,
            Strategy::Coverage => cfg.coverage_weight = axes.coverage_weight,
        }
        cfg
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected eos-gate, length-bonus or coverage)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub temperatures: Vec<f64>,
    pub beam_widths: Vec<usize>,
    /// When non-empty the sweep runs over strategies at the base temperature
    /// instead of over temperatures.
    pub strategies: Vec<Strategy>,
    /// Bonus used by the length-bonus strategy.
    pub length_bonus: f64,
    /// Weight used by the coverage strategy.
    pub coverage_weight: f64,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            temperatures: vec![1.0],
            beam_widths: vec![1, 10],
            strategies: Vec::new(),
            length_bonus: 1.0,
            coverage_weight: 1.5,
        }
    }
}

/// Models generated in memory instead of read from a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBlock {
    pub count: usize,
    /// Per-model settings; the `seed` field is replaced by one derived from
    /// the experiment seed.
    #[serde(default)]
    pub model: SyntheticConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: Option<PathBuf>,
    pub synthetic: Option<SyntheticBlock>,
    pub lm: Option<PathBuf>,
    pub beam_width: usize,
    pub max_length: usize,
    pub score: ScoreConfig,
    pub sweep: SweepAxes,
    /// Overrides the fallback flag stored in each model file.
    pub fallback: Option<bool>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            synthetic: None,
            lm: None,
            beam_width: 10,
            max_length: 64,
            score: ScoreConfig::default(),
            sweep: SweepAxes::default(),
            fallback: None,
            seed: 0,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.manifest.is_some() != self.synthetic.is_some(),
            "exactly one of `manifest` and `synthetic` must be given"
        );
        ensure!(self.beam_width >= 1, "beam width must be >= 1");
        ensure!(self.max_length >= 1, "max length must be >= 1");
        self.score.validate()?;
        if self.score.lm_weight > 0.0 && self.lm.is_none() {
            bail!(
                "refusing to run: lm weight is {} but no language model was given (use --lm)",
                self.score.lm_weight
            );
        }
        ensure!(!self.sweep.temperatures.is_empty(), "sweep temperatures must not be empty");
        ensure!(!self.sweep.beam_widths.is_empty(), "sweep beam widths must not be empty");
        ensure!(self.sweep.beam_widths.iter().all(|&w| w >= 1), "sweep beam widths must be >= 1");
        for &t in &self.sweep.temperatures {
            ScoreConfig { temperature: t, ..self.score.clone() }.validate()?;
        }
        for st in &self.sweep.strategies {
            st.apply(&self.score, &self.sweep).validate()?;
        }
        if let Some(s) = &self.synthetic {
            ensure!(s.count >= 1, "synthetic count must be >= 1");
            s.model.validate()?;
        }
        Ok(())
    }

    /// Compact single-line JSON, as recorded in CSV footers. The output
    /// path is left out so that the same experiment written to two places
    /// yields identical files.
    pub fn to_json_line(&self) -> String {
        let cfg = ExperimentConfig { out: None, ..self.clone() };
        serde_json::to_string(&cfg).expect("config serializes")
    }

    /// Loads the LM only when it is going to be used.
    pub fn load_lm(&self) -> Result<Option<CharNGramLM>> {
        match &self.lm {
            Some(path) if self.score.lm_weight > 0.0 => Ok(Some(
                CharNGramLM::load(path).with_context(|| format!("loading LM {}", path.display()))?,
            )),
            _ => Ok(None),
        }
    }

    pub fn load_utterances(&self) -> Result<Vec<Utterance>> {
        let utts = match (&self.manifest, &self.synthetic) {
            (Some(path), _) => Manifest::load(path)?.load_models(path)?,
            (None, Some(block)) => synthesize(block, self.seed)?,
            (None, None) => bail!("no models: give a manifest or a synthetic block"),
        };
        Ok(match self.fallback {
            Some(fallback) => utts
                .into_iter()
                .map(|u| Utterance { id: u.id, model: u.model.with_fallback(fallback) })
                .collect(),
            None => utts,
        })
    }
}

pub struct Utterance {
    pub id: String,
    pub model: PrefixTableModel,
}

pub fn utterance_id(index: usize) -> String {
    format!("m{index:04}")
}

fn synthesize(block: &SyntheticBlock, seed: u64) -> Result<Vec<Utterance>> {
    (0..block.count)
        .map(|i| {
            let cfg = SyntheticConfig { seed: model_seed(seed, i), ..block.model.clone() };
            Ok(Utterance { id: utterance_id(i), model: generate_synthetic(&cfg)? })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Model file, relative to the manifest's directory.
    pub file: String,
    pub seed: u64,
    pub reference: String,
    pub trapped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub generator: SyntheticConfig,
    pub models: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        ensure!(
            m.version == MANIFEST_VERSION,
            "unsupported manifest version {} in {}",
            m.version,
            path.display()
        );
        Ok(m)
    }

    pub fn load_models(&self, path: &Path) -> Result<Vec<Utterance>> {
        let dir = path.parent().unwrap_or(Path::new("."));
        self.models
            .iter()
            .map(|e| {
                let file = dir.join(&e.file);
                let model =
                    PrefixTableModel::load(&file).with_context(|| format!("loading model {}", file.display()))?;
                ensure!(
                    model.reference_text() == e.reference,
                    "manifest reference for {} does not match {}",
                    e.id,
                    file.display()
                );
                Ok(Utterance { id: e.id.clone(), model })
            })
            .collect()
    }
}
