//! Run spec: a TOML file plus command-line overrides.
//!
//! ```toml
//! mode = "online"            # online | offline | mobo
//! problem = "zdt1"
//! seeds = "1000..5000"       # or [1000, 2000]
//! output = "runs/zdt1"
//! n = 100
//! steps = 5000
//! eta0 = 0.1
//!
//! [online.train]
//! epochs = 1000
//! ```
//!
//! Top-level `n`, `steps`, `epochs`, `nu`, `rho`, `zeta`, `eta0` and `variant` are shortcuts
//! for the same keys inside the active mode's table and win over them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spread_core::guidance::{GuidanceConfig, Variant};
use spread_core::mobo::MoboConfig;
use spread_core::offline::OfflineConfig;
use spread_core::problems::{Objective, Problem};
use spread_core::sampler::OnlineConfig;

use crate::failure::{CliResult, Failure};

/// Environment variable naming the directory relative output paths live under.
pub const OUTPUT_ROOT_VAR: &str = "SPREAD_OUTPUT_ROOT";

/// Seeds used when none are given.
pub const DEFAULT_SEEDS: [u64; 5] = [1000, 2000, 3000, 4000, 5000];

/// Step of a seed range written without one (`1000..5000`).
pub const DEFAULT_SEED_STEP: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Online,
    Offline,
    Mobo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Online => "online",
            Mode::Offline => "offline",
            Mode::Mobo => "mobo",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "online" => Ok(Mode::Online),
            "offline" => Ok(Mode::Offline),
            "mobo" => Ok(Mode::Mobo),
            _ => Err(format!("unknown mode `{s}` (expected online, offline or mobo)")),
        }
    }
}

/// Seed list: `1000,2000`, `1000..5000` (inclusive, step 1000) or `1..5:1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SeedsRepr", into = "Vec<u64>")]
pub struct Seeds(pub Vec<u64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedsRepr {
    List(Vec<u64>),
    Text(String),
}

impl TryFrom<SeedsRepr> for Seeds {
    type Error = String;
    fn try_from(r: SeedsRepr) -> Result<Self, String> {
        match r {
            SeedsRepr::List(v) => Ok(Seeds(v)),
            SeedsRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Seeds> for Vec<u64> {
    fn from(s: Seeds) -> Self {
        s.0
    }
}

impl FromStr for Seeds {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("`{t}` is not a seed"));
        if let Some((a, rest)) = s.split_once("..") {
            let (b, step) = match rest.split_once(':') {
                Some((b, st)) => (b, num(st)?),
                None => (rest, DEFAULT_SEED_STEP),
            };
            let (a, b) = (num(a)?, num(b)?);
            if step == 0 || b < a {
                return Err(format!("empty seed range `{s}`"));
            }
            return Ok(Seeds((a..=b).step_by(step as usize).collect()));
        }
        s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect::<Result<_, _>>().map(Seeds)
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds(DEFAULT_SEEDS.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    /// CSV of evaluated designs (offline mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Method name in reports; defaults to `<mode>/<variant>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Online checkpoint path; `{seed}` is substituted. Loaded when present, written otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,

    #[serde(default)]
    pub online: OnlineConfig,
    #[serde(default)]
    pub offline: OfflineConfig,
    #[serde(default)]
    pub mobo: MoboConfig,
}

impl RunSpec {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            problem: None,
            dataset: None,
            seeds: Seeds::default(),
            output: None,
            label: None,
            checkpoint: None,
            n: None,
            steps: None,
            epochs: None,
            nu: None,
            rho: None,
            zeta: None,
            eta0: None,
            variant: None,
            online: OnlineConfig::default(),
            offline: OfflineConfig::default(),
            mobo: MoboConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| Failure::user(format!("invalid run spec: {e}")))
    }

    /// Reads a spec file; relative `dataset` and `checkpoint` paths are taken from the file's
    /// directory.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::user(format!("cannot read run spec {}: {e}", path.display())))?;
        let mut spec = Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &spec.dataset {
            if d.is_relative() {
                spec.dataset = Some(base.join(d));
            }
        }
        if let Some(c) = &spec.checkpoint {
            if Path::new(c).is_relative() {
                spec.checkpoint = Some(base.join(c).to_string_lossy().into_owned());
            }
        }
        Ok(spec)
    }

    /// Pushes the shortcut fields into the active mode's configuration.
    pub fn resolve(&mut self) {
        let (n, steps, epochs, g) = match self.mode {
            Mode::Online => (&mut self.online.n, &mut self.online.steps, &mut self.online.train.epochs, &mut self.online.guidance),
            Mode::Offline => (&mut self.offline.n, &mut self.offline.steps, &mut self.offline.train.epochs, &mut self.offline.guidance),
            Mode::Mobo => (&mut self.mobo.offspring, &mut self.mobo.steps, &mut self.mobo.train.epochs, &mut self.mobo.guidance),
        };
        if let Some(v) = self.n {
            *n = v;
        }
        if let Some(v) = self.steps {
            *steps = v;
        }
        if let Some(v) = self.epochs {
            *epochs = v;
        }
        if let Some(v) = self.nu {
            g.nu = v;
        }
        if let Some(v) = self.rho {
            g.rho = v;
        }
        if let Some(v) = self.zeta {
            g.zeta = v;
        }
        if let Some(v) = self.eta0 {
            g.armijo.eta0 = v;
        }
        if let Some(v) = self.variant {
            g.variant = v;
        }
    }

    pub fn guidance(&self) -> &GuidanceConfig {
        match self.mode {
            Mode::Online => &self.online.guidance,
            Mode::Offline => &self.offline.guidance,
            Mode::Mobo => &self.mobo.guidance,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let v = serde_json::to_value(self.guidance().variant).ok();
            let v = v.as_ref().and_then(|v| v.as_str()).unwrap_or("full");
            format!("{}/{v}", self.mode.as_str())
        })
    }

    /// Problem name, or the dataset file stem in offline mode.
    pub fn subject(&self) -> String {
        match (&self.problem, &self.dataset) {
            (Some(p), _) => p.clone(),
            (None, Some(d)) => d.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned()),
            (None, None) => "unnamed".into(),
        }
    }

    /// Output directory, under `SPREAD_OUTPUT_ROOT` when that is set and the path is relative.
    pub fn output_dir(&self) -> PathBuf {
        let rel = self
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", self.mode.as_str(), self.subject())));
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if rel.is_relative() && !root.is_empty() => PathBuf::from(root).join(rel),
            _ => rel,
        }
    }

    pub fn checkpoint_path(&self, seed: u64) -> Option<PathBuf> {
        self.checkpoint.as_ref().map(|c| PathBuf::from(c.replace("{seed}", &seed.to_string())))
    }

    /// Checks every field and reports all problems at once, one `field: message` per line.
    /// Call after [`RunSpec::resolve`].
    pub fn validate(&self) -> CliResult<()> {
        let mut errs: Vec<String> = Vec::new();
        let mut bad = |field: &str, msg: String| errs.push(format!("  {field}: {msg}"));

        if self.seeds.0.is_empty() {
            bad("seeds", "at least one seed is required".into());
        }
        let mut sorted = self.seeds.0.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            bad("seeds", "seeds must be distinct".into());
        }

        let problem = match &self.problem {
            Some(name) => match Problem::from_name(name) {
                Ok(p) => Some(p),
                Err(e) => {
                    bad("problem", e.to_string());
                    None
                }
            },
            None => None,
        };
        match self.mode {
            Mode::Online | Mode::Mobo => {
                if self.problem.is_none() {
                    bad("problem", format!("required in {} mode", self.mode.as_str()));
                }
                if self.dataset.is_some() {
                    bad("dataset", format!("not used in {} mode", self.mode.as_str()));
                }
            }
            Mode::Offline => {
                if self.dataset.is_none() {
                    bad("dataset", "required in offline mode".into());
                }
            }
        }
        if self.checkpoint.is_some() && self.mode != Mode::Online {
            bad("checkpoint", "only supported in online mode".into());
        }

        let section = self.mode.as_str();
        let (n, steps, epochs, hidden, heads) = match self.mode {
            Mode::Online => (self.online.n, self.online.steps, self.online.train.epochs, self.online.hidden, self.online.heads),
            Mode::Offline => (self.offline.n, self.offline.steps, self.offline.train.epochs, self.offline.hidden, self.offline.heads),
            Mode::Mobo => (self.mobo.offspring, self.mobo.steps, self.mobo.train.epochs, self.mobo.hidden, self.mobo.heads),
        };
        if n == 0 {
            bad("n", "must be positive".into());
        }
        if steps == 0 {
            bad("steps", "must be positive".into());
        }
        if epochs == 0 {
            bad("epochs", "must be positive".into());
        }
        if heads == 0 || hidden % heads != 0 {
            bad(&format!("{section}.hidden"), format!("{hidden} is not divisible by {heads} heads"));
        }
        if let Err(e) = self.guidance().validate() {
            bad(&format!("{section}.guidance"), e.to_string());
        }
        match self.mode {
            Mode::Mobo => {
                if self.mobo.n_init < 2 {
                    bad("mobo.n_init", "must be at least 2".into());
                }
                if self.mobo.batch == 0 {
                    bad("mobo.batch", "must be positive".into());
                }
            }
            Mode::Offline => {
                if let Some(r) = &self.offline.ref_point {
                    if let Some(p) = &problem {
                        if r.len() != p.n_obj() {
                            bad("offline.ref_point", format!("has {} entries, the problem has {} objectives", r.len(), p.n_obj()));
                        }
                    }
                }
            }
            Mode::Online => {
                if self.online.train.n_train == 0 {
                    bad("online.train.n_train", "must be positive".into());
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Failure::user(format!("invalid run spec:\n{}", errs.join("\n"))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_syntaxes() {
        assert_eq!("1000..5000".parse::<Seeds>().unwrap().0, vec![1000, 2000, 3000, 4000, 5000]);
        assert_eq!("1..3:1".parse::<Seeds>().unwrap().0, vec![1, 2, 3]);
        assert_eq!("7, 9".parse::<Seeds>().unwrap().0, vec![7, 9]);
        assert!("5..1".parse::<Seeds>().is_err());
        assert!("a,b".parse::<Seeds>().is_err());
    }

    #[test]
    fn defaults_and_shortcuts() {
        let mut s = RunSpec::from_toml("mode = \"online\"\nproblem = \"zdt1\"\nn = 12\neta0 = 0.5\n[online.train]\nepochs = 3\n").unwrap();
        assert_eq!(s.seeds.0, DEFAULT_SEEDS);
        s.resolve();
        assert_eq!(s.online.n, 12);
        assert_eq!(s.online.train.epochs, 3);
        assert_eq!(s.online.guidance.armijo.eta0, 0.5);
        assert_eq!(s.online.steps, OnlineConfig::default().steps);
        s.validate().unwrap();
        assert_eq!(s.label(), "online/full");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunSpec::from_toml("mode = \"online\"\n[online.guidance]\nnuu = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("nuu"), "{err}");
    }

    #[test]
    fn validation_lists_every_field() {
        let mut s = RunSpec::from_toml("mode = \"mobo\"\nseeds = []\nrho = 2.0\n").unwrap();
        s.resolve();
        let msg = s.validate().unwrap_err().to_string();
        for field in ["seeds:", "problem:", "mobo.guidance:"] {
            assert!(msg.contains(field), "{field} missing in {msg}");
        }
    }

    #[test]
    fn offline_needs_dataset() {
        let mut s = RunSpec::new(Mode::Offline);
        s.resolve();
        assert!(s.validate().unwrap_err().to_string().contains("dataset: required"));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut s = RunSpec::new(Mode::Mobo);
        s.problem = Some("dtlz2-m3-d20".into());
        s.eta0 = Some(0.2);
        let text = toml::to_string(&s).unwrap();
        assert_eq!(RunSpec::from_toml(&text).unwrap(), s);
    }
}
