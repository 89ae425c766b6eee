//! TOML run configuration. Every section is optional except where a command
//! needs it; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use coxthin::gp::{Kernel, LmcParams};
use coxthin::matern3::{Matern3CheckConfig, Shadow};
use coxthin::mtsgcp::{GewekeConfig, GibbsControls, Priors};
use coxthin::sgcp::{BdmControls, EmptyComparisonConfig};
use coxthin::{Domain, Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub domain: Option<DomainConfig>,
    pub sgcp: Option<SgcpConfig>,
    pub mtsgcp: Option<MtsgcpConfig>,
    pub matern3: Option<Matern3Config>,
    pub priors: Option<Priors>,
    #[serde(default)]
    pub controls: GibbsControls,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub pcf: PcfConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    pub output: Option<OutputConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainConfig {
    pub fn build(&self) -> Result<Domain> {
        Domain::new(&self.lower, &self.upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgcpConfig {
    pub lambda: f64,
    /// Decay rate of the exponential kernel.
    pub range: f64,
    #[serde(default = "one")]
    pub variance: f64,
    #[serde(default)]
    pub mean: f64,
}

fn one() -> f64 {
    1.0
}

impl SgcpConfig {
    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::exponential(self.range, self.variance)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtsgcpConfig {
    pub lambda: f64,
    /// Rows of the coregionalization matrix.
    pub a: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
}

impl MtsgcpConfig {
    pub fn lmc(&self) -> Result<LmcParams> {
        let p = self.a.len();
        if self.a.iter().any(|row| row.len() != p) {
            return Err(Error::Parameter("coregionalization matrix must be square".into()));
        }
        let a = nalgebra::DMatrix::from_fn(p, p, |r, c| self.a[r][c]);
        LmcParams::new(a, self.rho.clone(), self.mu.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matern3Config {
    pub lambda: f64,
    pub shadow: Shadow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub type_column: Option<String>,
    #[serde(default)]
    pub rescale: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub chains: usize,
    pub iters: usize,
    pub burn: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { chains: 1, iters: 1000, burn: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcfConfig {
    pub radii: Vec<f64>,
    pub n_mc: usize,
    /// Parameter draws used, evenly spaced over the pooled traces.
    pub max_draws: usize,
}

impl Default for PcfConfig {
    fn default() -> Self {
        Self {
            radii: (1..=20).map(|i| 0.025 * i as f64).collect(),
            n_mc: 10_000,
            max_draws: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub res: usize,
    /// Trace records used, evenly spaced over the pooled traces.
    pub max_draws: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { res: 64, max_draws: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixBConfig {
    pub lambda: f64,
    pub range: f64,
    pub reps: usize,
    pub grid_res: usize,
    pub windows: usize,
    pub radii: Vec<f64>,
}

impl Default for AppendixBConfig {
    fn default() -> Self {
        Self {
            lambda: 5.0,
            range: 2.0,
            reps: 100_000,
            grid_res: 128,
            windows: 2,
            radii: vec![0.05, 0.1, 0.2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixCConfig {
    pub lambdas: Vec<f64>,
    pub range: f64,
    pub reps: usize,
    pub grid_res: usize,
}

impl Default for AppendixCConfig {
    fn default() -> Self {
        Self { lambdas: vec![2.0, 5.0], range: 2.0, reps: 10_000, grid_res: 64 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub colouring_tolerance: Option<f64>,
    pub appendix_b: AppendixBConfig,
    pub appendix_c: AppendixCConfig,
    pub matern3: Matern3CheckConfig,
    pub geweke: GewekeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub lambda: f64,
    pub range: f64,
    pub bdm: BdmControls,
    pub runs: EmptyComparisonConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            range: 2.0,
            bdm: BdmControls::default(),
            runs: EmptyComparisonConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse { line, message: e.message().to_string() }
        })
    }

    pub fn domain(&self) -> Result<Domain> {
        match &self.domain {
            Some(d) => d.build(),
            None => Ok(Domain::unit_square()),
        }
    }

    pub fn priors(&self, dom: &Domain) -> Priors {
        self.priors.unwrap_or_else(|| Priors::default_for(dom))
    }
}
