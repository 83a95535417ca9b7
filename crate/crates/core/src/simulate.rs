//! Simulated data-generating processes, the replication harness and runtime
//! studies.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_number, standardize, Assignment, CovariateMatrix, OutcomeVector};
use crate::designs::{make_design, Bandwidth, DesignOptions, FlipPolicy, Method, DEFAULT_PILOT};
use crate::error::{Error, Result};
use crate::estimators::{estimate, Estimator};
use crate::rng::RandomSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dgp {
    #[serde(rename = "linear", alias = "LinearDGP")]
    Linear,
    #[serde(rename = "quickblock", alias = "QuickBlockDGP")]
    QuickBlock,
    #[serde(rename = "sinusoidal", alias = "SinusoidalDGP")]
    Sinusoidal,
    #[serde(rename = "twocircles", alias = "TwoCircles")]
    TwoCircles,
}

impl Dgp {
    pub const ALL: [Dgp; 4] = [Dgp::Linear, Dgp::QuickBlock, Dgp::Sinusoidal, Dgp::TwoCircles];

    pub fn name(self) -> &'static str {
        match self {
            Dgp::Linear => "linear",
            Dgp::QuickBlock => "quickblock",
            Dgp::Sinusoidal => "sinusoidal",
            Dgp::TwoCircles => "twocircles",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Dgp::Linear | Dgp::Sinusoidal => 4,
            Dgp::QuickBlock | Dgp::TwoCircles => 2,
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dgp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let key = key.strip_suffix("dgp").unwrap_or(&key);
        Dgp::ALL
            .into_iter()
            .find(|d| d.name() == key)
            .ok_or_else(|| Error::UnknownDgp(s.to_string()))
    }
}

/// One simulated sample with both potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub x: CovariateMatrix,
    pub y0: OutcomeVector,
    pub y1: OutcomeVector,
    /// Difference of the noiseless mean functions per unit.
    pub tau: Vec<f64>,
    /// Coefficients drawn for this sample.
    pub beta: Vec<f64>,
    pub dgp: Dgp,
    pub seed: RandomSeed,
}

impl SimData {
    pub fn n(&self) -> usize {
        self.x.n()
    }

    /// `y1` where treated, `y0` elsewhere.
    pub fn reveal(&self, a: &Assignment) -> Result<OutcomeVector> {
        a.require_len(self.n())?;
        OutcomeVector::new(
            (0..self.n())
                .map(|i| if a.is_treated(i) { self.y1[i] } else { self.y0[i] })
                .collect(),
        )
    }

    /// Sample average of the true effects.
    pub fn true_ate(&self) -> f64 {
        self.tau.iter().sum::<f64>() / self.tau.len() as f64
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a sample of size `n`.
///
/// Covariates come first, then the coefficients, then per-unit noise (control
/// before treated), all from one stream seeded by `seed`.
pub fn generate(dgp: Dgp, n: usize, seed: RandomSeed) -> Result<SimData> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 units, got {n}")));
    }
    let mut rng = seed.rng();
    let d = dgp.dim();
    let mut x = Vec::with_capacity(n * d);
    let mut latent = Vec::new();
    match dgp {
        Dgp::Linear | Dgp::Sinusoidal => {
            for _ in 0..n * d {
                x.push(normal(&mut rng));
            }
        }
        Dgp::QuickBlock => {
            let u = Uniform::new(0.0, 10.0).expect("valid range");
            for _ in 0..n * d {
                x.push(u.sample(&mut rng));
            }
        }
        Dgp::TwoCircles => {
            let angle = Uniform::new(0.0, 2.0 * PI).expect("valid range");
            for i in 0..n {
                let radius = Normal::new(1.0 + (i % 2) as f64, 0.1).expect("positive sd");
                let r = radius.sample(&mut rng);
                let s = angle.sample(&mut rng);
                x.push(r * s.cos());
                x.push(r * s.sin());
                latent.push((r, s));
            }
        }
    }
    let beta_len = match dgp {
        Dgp::Linear | Dgp::Sinusoidal => d,
        Dgp::TwoCircles => 2,
        Dgp::QuickBlock => 0,
    };
    let beta: Vec<f64> = (0..beta_len).map(|_| rng.random::<f64>()).collect();
    let xb = |i: usize| -> f64 { x[i * d..(i + 1) * d].iter().zip(&beta).map(|(v, b)| v * b).sum() };
    let (mut y0, mut y1, mut tau) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let (e0, e1) = (normal(&mut rng), normal(&mut rng));
        let (m0, m1, s0, s1) = match dgp {
            Dgp::Linear => (xb(i), 1.0 + xb(i), e0 / 10.0, e1 / 10.0),
            Dgp::Sinusoidal => (xb(i).sin(), 1.0 + xb(i).sin(), e0 / 10.0, e1 / 10.0),
            Dgp::QuickBlock => {
                let m = x[i * d] * x[i * d + 1];
                (m, 1.0 + m, e0, e0)
            }
            Dgp::TwoCircles => {
                let (r, s) = latent[i];
                let m = beta[0] * s + beta[1] * r;
                (m, m, e0, e1)
            }
        };
        y0.push(m0 + s0);
        y1.push(m1 + s1);
        tau.push(m1 - m0);
    }
    Ok(SimData {
        x: CovariateMatrix::new(n, d, x)?,
        y0: OutcomeVector::new(y0)?,
        y1: OutcomeVector::new(y1)?,
        tau,
        beta,
        dgp,
        seed,
    })
}

/// Settings shared by every replication of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub design: DesignOptions,
    /// Neighbors for the k-NN T-learner.
    pub k: usize,
    /// Standardize covariates before design and estimation.
    pub standardize: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            design: DesignOptions::default(),
            k: 5,
            standardize: true,
        }
    }
}

/// Errors and timings of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub dgp: Dgp,
    pub method: Method,
    pub estimator: Estimator,
    pub n: usize,
    /// Estimated minus true sample ATE.
    pub ate_error: f64,
    pub ite_sq_errors: Vec<f64>,
    pub design_ms: f64,
    pub estimate_ms: f64,
}

impl ReplicationResult {
    pub fn ite_mse(&self) -> f64 {
        self.ite_sq_errors.iter().sum::<f64>() / self.ite_sq_errors.len() as f64
    }
}

/// Generates data, designs, reveals outcomes and estimates.
///
/// The data come from `seed.derive(&[0])` and the design from
/// `seed.derive(&[1])`, so every method and estimator sees the same sample
/// under the same replication seed.
pub fn run_replication(
    dgp: Dgp,
    n: usize,
    method: Method,
    estimator: Estimator,
    seed: RandomSeed,
    opts: &RunOptions,
) -> Result<ReplicationResult> {
    let data = generate(dgp, n, seed.derive(&[0]))?;
    let x = if opts.standardize {
        standardize(&data.x).matrix
    } else {
        data.x.clone()
    };
    let t0 = Instant::now();
    let design = make_design(method, &x, &opts.design, seed.derive(&[1]))?;
    let design_ms = t0.elapsed().as_secs_f64() * 1e3;
    let y = data.reveal(&design.assignment)?;
    let t1 = Instant::now();
    let est = estimate(estimator, &design, &x, &y, opts.k)?;
    let estimate_ms = t1.elapsed().as_secs_f64() * 1e3;
    let ite_sq_errors = est
        .ite
        .as_slice()
        .iter()
        .zip(&data.tau)
        .map(|(t, truth)| (t - truth).powi(2))
        .collect();
    Ok(ReplicationResult {
        dgp,
        method,
        estimator,
        n,
        ate_error: est.ate - data.true_ate(),
        ite_sq_errors,
        design_ms,
        estimate_ms,
    })
}

/// Seed of replication `rep` of the `(dgp, n)` cell.
pub fn replication_seed(master: RandomSeed, dgp: Dgp, n: usize, rep: usize) -> RandomSeed {
    master.derive(&[dgp.tag(), n as u64, rep as u64])
}

fn default_true() -> bool {
    true
}
fn default_accept_frac() -> f64 {
    0.01
}
fn default_k() -> usize {
    5
}
fn default_pilot() -> usize {
    DEFAULT_PILOT
}

/// Benchmark grid, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub dgps: Vec<Dgp>,
    pub methods: Vec<Method>,
    pub estimators: Vec<Estimator>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    #[serde(default = "default_accept_frac")]
    pub accept_frac: f64,
    #[serde(default = "default_pilot")]
    pub pilot: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Reported errors are multiplied by `n^normalization_exponent`.
    #[serde(default)]
    pub normalization_exponent: f64,
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.dgps.is_empty() || self.methods.is_empty() || self.estimators.is_empty() || self.n_grid.is_empty() {
            return Err(Error::InvalidParameter("every grid axis needs at least one entry".into()));
        }
        Ok(())
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            design: DesignOptions {
                bandwidth: self.bandwidth,
                accept_frac: self.accept_frac,
                pilot: self.pilot,
                flip: FlipPolicy::Random,
            },
            k: self.k,
            standardize: self.standardize,
        }
    }
}

/// Aggregates of one `(dgp, method, estimator, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub dgp: Dgp,
    pub method: Method,
    pub estimator: Estimator,
    pub n: usize,
    pub reps: usize,
    pub mse_ate: f64,
    pub mise_ite: f64,
    pub mean_design_ms: f64,
    /// First failure in the cell; the metrics are NaN when set.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    pub normalization_exponent: f64,
}

/// Runs one cell and aggregates it. Replications run on the rayon pool
/// unless `serial` is set; aggregation is in replication order either way.
pub fn run_cell(
    dgp: Dgp,
    method: Method,
    estimator: Estimator,
    n: usize,
    reps: usize,
    master: RandomSeed,
    opts: &RunOptions,
    serial: bool,
) -> Result<Vec<ReplicationResult>> {
    let one = |rep: usize| run_replication(dgp, n, method, estimator, replication_seed(master, dgp, n, rep), opts);
    let results: Vec<Result<ReplicationResult>> = if serial {
        (0..reps).map(one).collect()
    } else {
        (0..reps).into_par_iter().map(one).collect()
    };
    results.into_iter().collect()
}

/// Aggregates replications: `mse_ate = mean(ate_error^2)` and
/// `mise_ite = mean over replications of the per-unit mean squared error`.
pub fn aggregate(results: &[ReplicationResult], scale: f64) -> (f64, f64, f64) {
    let r = results.len() as f64;
    let mse = results.iter().map(|x| x.ate_error * x.ate_error).sum::<f64>() / r;
    let mise = results.iter().map(|x| x.ite_mse()).sum::<f64>() / r;
    let ms = results.iter().map(|x| x.design_ms).sum::<f64>() / r;
    (mse * scale, mise * scale, ms)
}

/// Runs every cell of the grid, calling `on_row` as each one finishes.
pub fn run_benchmark_with(
    config: &BenchmarkConfig,
    serial: bool,
    mut on_row: impl FnMut(&BenchmarkRow),
) -> Result<BenchmarkTable> {
    config.validate()?;
    let opts = config.run_options();
    let master = RandomSeed(config.seed);
    let mut rows = Vec::new();
    for &dgp in &config.dgps {
        for &method in &config.methods {
            for &estimator in &config.estimators {
                for &n in &config.n_grid {
                    let scale = (n as f64).powf(config.normalization_exponent);
                    let row = match run_cell(dgp, method, estimator, n, config.reps, master, &opts, serial) {
                        Ok(results) => {
                            let (mse_ate, mise_ite, mean_design_ms) = aggregate(&results, scale);
                            BenchmarkRow {
                                dgp,
                                method,
                                estimator,
                                n,
                                reps: config.reps,
                                mse_ate,
                                mise_ite,
                                mean_design_ms,
                                error: None,
                            }
                        }
                        Err(e) => BenchmarkRow {
                            dgp,
                            method,
                            estimator,
                            n,
                            reps: config.reps,
                            mse_ate: f64::NAN,
                            mise_ite: f64::NAN,
                            mean_design_ms: f64::NAN,
                            error: Some(e.to_string()),
                        },
                    };
                    on_row(&row);
                    rows.push(row);
                }
            }
        }
    }
    Ok(BenchmarkTable {
        rows,
        normalization_exponent: config.normalization_exponent,
    })
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkTable> {
    run_benchmark_with(config, false, |_| {})
}

pub const RESULTS_HEADER: &str = "dgp,method,estimator,n,reps,mse_ate,mise_ite,normalization_exponent,error";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn metric(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format_number(v)
    }
}

/// One results line (no trailing newline). Timings are left out so the
/// file only depends on the configuration.
pub fn results_line(row: &BenchmarkRow, normalization_exponent: f64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        row.dgp,
        row.method,
        row.estimator,
        row.n,
        row.reps,
        metric(row.mse_ate),
        metric(row.mise_ite),
        normalization_exponent,
        csv_field(row.error.as_deref().unwrap_or(""))
    )
}

pub fn write_results_csv(path: impl AsRef<Path>, table: &BenchmarkTable) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for row in &table.rows {
        out.push_str(&results_line(row, table.normalization_exponent));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `dgp,method,estimator,n,mean_design_ms`.
pub fn write_timings_csv(path: impl AsRef<Path>, table: &BenchmarkTable) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "dgp,method,estimator,n,mean_design_ms").map_err(io)?;
    for r in &table.rows {
        writeln!(w, "{},{},{},{},{}", r.dgp, r.method, r.estimator, r.n, metric(r.mean_design_ms)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Mean design time per sample size and the fitted log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStudy {
    pub method: Method,
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
}

/// Least-squares slope of `ln(ms)` on `ln(n)`.
pub fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, ms)| ((n as f64).ln(), ms.max(1e-6).ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Times `method` on uniform data in `dim` dimensions, serially.
pub fn runtime_scaling(method: Method, n_grid: &[usize], reps: usize, dim: usize, seed: RandomSeed) -> Result<RuntimeStudy> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n_grid needs at least two ascending sizes".into()));
    }
    if reps == 0 || dim == 0 {
        return Err(Error::InvalidParameter("reps and dim must be positive".into()));
    }
    let opts = DesignOptions::default();
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut total = 0.0;
        for rep in 0..reps {
            let mut rng = seed.derive(&[n as u64, rep as u64]).rng();
            let x = CovariateMatrix::new(n, dim, (0..n * dim).map(|_| rng.random::<f64>()).collect())?;
            let t = Instant::now();
            let design = make_design(method, &x, &opts, seed.derive(&[n as u64, rep as u64, 1]))?;
            total += t.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(design);
        }
        points.push((n, total / reps as f64));
    }
    let slope = log_log_slope(&points);
    Ok(RuntimeStudy { method, points, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_effects() {
        for (dgp, value) in [(Dgp::Linear, 1.0), (Dgp::QuickBlock, 1.0), (Dgp::Sinusoidal, 1.0), (Dgp::TwoCircles, 0.0)] {
            let data = generate(dgp, 50, RandomSeed(3)).unwrap();
            assert!(data.tau.iter().all(|&t| (t - value).abs() < 1e-12), "{dgp}");
            assert_eq!(data.x.dim(), dgp.dim());
        }
    }

    #[test]
    fn two_circles_radii_follow_parity() {
        let data = generate(Dgp::TwoCircles, 400, RandomSeed(8)).unwrap();
        let radius = |i: usize| data.x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        let mean = |parity: usize| (0..400).filter(|i| i % 2 == parity).map(radius).sum::<f64>() / 200.0;
        assert!((mean(0) - 1.0).abs() < 0.05);
        assert!((mean(1) - 2.0).abs() < 0.05);
    }

    #[test]
    fn quickblock_shares_noise() {
        let data = generate(Dgp::QuickBlock, 30, RandomSeed(1)).unwrap();
        for i in 0..30 {
            assert!((data.y1[i] - data.y0[i] - 1.0).abs() < 1e-12);
            assert!(data.x.row(i).iter().all(|&v| (0.0..10.0).contains(&v)));
        }
    }

    #[test]
    fn reveal_masks_exactly() {
        let data = generate(Dgp::Linear, 6, RandomSeed(2)).unwrap();
        let a = Assignment::new(vec![1, 0, 0, 1, 1, 0]).unwrap();
        let y = data.reveal(&a).unwrap();
        for i in 0..6 {
            let want = if a.is_treated(i) { data.y1[i] } else { data.y0[i] };
            assert_eq!(y[i], want);
        }
    }

    #[test]
    fn dgp_names() {
        assert_eq!("LinearDGP".parse::<Dgp>().unwrap(), Dgp::Linear);
        assert_eq!("twocircles".parse::<Dgp>().unwrap(), Dgp::TwoCircles);
        assert_eq!("nope".parse::<Dgp>(), Err(Error::UnknownDgp("nope".into())));
        assert!(generate(Dgp::Linear, 1, RandomSeed(0)).is_err());
    }

    #[test]
    fn replication_is_deterministic() {
        let opts = RunOptions::default();
        let run = || run_replication(Dgp::Sinusoidal, 64, Method::SoftBlock, Estimator::Design, RandomSeed(5), &opts).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.ate_error, b.ate_error);
        assert_eq!(a.ite_sq_errors, b.ite_sq_errors);
    }

    #[test]
    fn aggregation_identities() {
        let r = ReplicationResult {
            dgp: Dgp::Linear,
            method: Method::Bernoulli,
            estimator: Estimator::Dim,
            n: 4,
            ate_error: 0.0,
            ite_sq_errors: vec![0.0; 4],
            design_ms: 1.0,
            estimate_ms: 1.0,
        };
        assert_eq!(aggregate(&[r.clone(), r], 1.0), (0.0, 0.0, 1.0));
    }

    #[test]
    fn single_cell_matches_replication() {
        let config = BenchmarkConfig {
            dgps: vec![Dgp::Linear],
            methods: vec![Method::Complete],
            estimators: vec![Estimator::Lin],
            n_grid: vec![40],
            reps: 1,
            seed: 11,
            standardize: true,
            bandwidth: Bandwidth::Auto,
            accept_frac: 0.01,
            pilot: DEFAULT_PILOT,
            k: 5,
            normalization_exponent: 0.0,
        };
        let table = run_benchmark(&config).unwrap();
        assert_eq!(table.rows.len(), 1);
        let seed = replication_seed(RandomSeed(11), Dgp::Linear, 40, 0);
        let r = run_replication(Dgp::Linear, 40, Method::Complete, Estimator::Lin, seed, &config.run_options()).unwrap();
        assert_eq!(table.rows[0].mse_ate, r.ate_error * r.ate_error);
        assert_eq!(table.rows[0].mise_ite, r.ite_mse());
    }

    #[test]
    fn grid_shape_and_error_column() {
        let config: BenchmarkConfig = serde_json::from_str(
            r#"{"dgps":["linear","twocircles"],"methods":["bernoulli","softblock"],
                "estimators":["design"],"n_grid":[16,32],"reps":2,"seed":1}"#,
        )
        .unwrap();
        let table = run_benchmark(&config).unwrap();
        assert_eq!(table.rows.len(), 2 * 2 * 2);
        for row in &table.rows {
            match row.method {
                Method::Bernoulli => assert!(row.error.is_some() && row.mse_ate.is_nan()),
                _ => assert!(row.error.is_none() && row.mse_ate.is_finite()),
            }
        }
    }

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(usize, f64)> = [100usize, 200, 400, 800].iter().map(|&n| (n, 3.0 * (n as f64).powi(2))).collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
    }
}
