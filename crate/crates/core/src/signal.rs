//! Signal generation and second-order statistics.
//!
//! Two statistics modes are supported. In oracle mode the exact covariance
//! matrices of the generative model are used directly, isolating algorithmic
//! behaviour from estimation noise. In sampled mode finite batches are drawn
//! and statistics estimated from them, which is what a deployed network does.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DasfError, Result};
use crate::network::NetworkModel;

/// Relative Frobenius tolerance for covariance symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Second-order statistics of a collection of named signals over one common
/// dimension: full covariances for network-wide signals, cross-covariances
/// against low-dimensional reference signals, and named scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    dim: usize,
    cov: BTreeMap<String, DMatrix<f64>>,
    cross: BTreeMap<String, DMatrix<f64>>,
    scalars: BTreeMap<String, f64>,
}

impl Statistics {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            cov: BTreeMap::new(),
            cross: BTreeMap::new(),
            scalars: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Insert a named covariance. Must be `dim × dim` and symmetric within
    /// [`SYMMETRY_TOL`] (relative Frobenius); it is symmetrized exactly on
    /// insert so downstream code can rely on `‖C − Cᵀ‖ = 0`.
    pub fn insert_cov(&mut self, name: &str, cov: DMatrix<f64>) -> Result<()> {
        if cov.nrows() != self.dim || cov.ncols() != self.dim {
            return Err(DasfError::Shape(format!(
                "covariance `{name}` is {}x{}, expected {}x{}",
                cov.nrows(),
                cov.ncols(),
                self.dim,
                self.dim
            )));
        }
        let asym = (&cov - cov.transpose()).norm();
        let scale = cov.norm().max(1.0);
        if asym > SYMMETRY_TOL * scale {
            return Err(DasfError::InvalidModel(format!(
                "covariance `{name}` is not symmetric (relative asymmetry {:.3e})",
                asym / scale
            )));
        }
        self.cov.insert(name.to_string(), crate::linalg::symmetrize(&cov));
        Ok(())
    }

    pub fn insert_cross(&mut self, name: &str, cross: DMatrix<f64>) -> Result<()> {
        if cross.nrows() != self.dim {
            return Err(DasfError::Shape(format!(
                "cross-covariance `{name}` has {} rows, expected {}",
                cross.nrows(),
                self.dim
            )));
        }
        self.cross.insert(name.to_string(), cross);
        Ok(())
    }

    pub fn insert_scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    pub fn cov(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.cov
            .get(name)
            .ok_or_else(|| DasfError::UnknownSignal(name.to_string(), self.declared()))
    }

    pub fn cross(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.cross
            .get(name)
            .ok_or_else(|| DasfError::UnknownSignal(name.to_string(), self.declared()))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        self.scalars
            .get(name)
            .copied()
            .ok_or_else(|| DasfError::UnknownSignal(name.to_string(), self.declared()))
    }

    pub fn has_cov(&self, name: &str) -> bool {
        self.cov.contains_key(name)
    }

    fn declared(&self) -> String {
        let mut names: Vec<&str> = self.cov.keys().map(|s| s.as_str()).collect();
        names.extend(self.cross.keys().map(|s| s.as_str()));
        names.extend(self.scalars.keys().map(|s| s.as_str()));
        names.join(", ")
    }

    /// Compress every statistic through the map `C` (dim × d): covariances by
    /// congruence `CᵀΣC`, cross-covariances by `CᵀΣ`, scalars unchanged.
    pub fn compress(&self, c: &DMatrix<f64>) -> Result<Statistics> {
        if c.nrows() != self.dim {
            return Err(DasfError::Shape(format!(
                "compression map has {} rows, statistics dimension is {}",
                c.nrows(),
                self.dim
            )));
        }
        let mut out = Statistics::new(c.ncols());
        for (name, sigma) in &self.cov {
            let compressed = c.transpose() * sigma * c;
            out.cov.insert(name.clone(), crate::linalg::symmetrize(&compressed));
        }
        for (name, sigma) in &self.cross {
            out.cross.insert(name.clone(), c.transpose() * sigma);
        }
        out.scalars = self.scalars.clone();
        Ok(out)
    }
}

/// Which statistics the algorithm runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatsMode {
    /// Exact covariances of the generative model.
    Oracle,
    /// Finite sample batches, statistics estimated per batch.
    Sampled,
}

/// Generative model of the sensed signals: `y(t) = A·d(t) + n(t)` with
/// `d ~ N(0, σ_d² I)` a latent target of `r` channels mixed by the `M × r`
/// matrix `A`, and `n ~ N(0, σ_n² I)` white noise.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    mixing: DMatrix<f64>,
    signal_var: f64,
    noise_var: f64,
}

impl MixtureModel {
    pub fn new(mixing: DMatrix<f64>, signal_var: f64, noise_var: f64) -> Result<Self> {
        if !(signal_var > 0.0) || !(noise_var > 0.0) {
            return Err(DasfError::InvalidModel("variances must be positive".into()));
        }
        Ok(Self { mixing, signal_var, noise_var })
    }

    /// Draw the mixing matrix with independent standard-normal entries.
    pub fn random(
        channels: usize,
        references: usize,
        signal_var: f64,
        noise_var: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        let mixing = DMatrix::from_fn(channels, references, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::new(mixing, signal_var, noise_var)
    }

    pub fn channels(&self) -> usize {
        self.mixing.nrows()
    }

    pub fn references(&self) -> usize {
        self.mixing.ncols()
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    /// Exact covariance of y: σ_d²·AAᵀ + σ_n²·I.
    pub fn cov_y(&self) -> DMatrix<f64> {
        let m = self.channels();
        self.signal_var * &self.mixing * self.mixing.transpose()
            + DMatrix::identity(m, m) * self.noise_var
    }

    /// Exact covariance of n: σ_n²·I.
    pub fn cov_n(&self) -> DMatrix<f64> {
        DMatrix::identity(self.channels(), self.channels()) * self.noise_var
    }

    /// Exact cross-covariance E[y dᵀ] = σ_d²·A.
    pub fn cross_yd(&self) -> DMatrix<f64> {
        self.signal_var * &self.mixing
    }

    /// E‖d‖² = σ_d²·r.
    pub fn d_power(&self) -> f64 {
        self.signal_var * self.references() as f64
    }

    /// Assemble the exact statistics object of the model.
    pub fn oracle_statistics(&self) -> Statistics {
        let mut stats = Statistics::new(self.channels());
        stats.insert_cov("y", self.cov_y()).expect("model covariance");
        stats.insert_cov("n", self.cov_n()).expect("model covariance");
        stats.insert_cross("yd", self.cross_yd()).expect("model cross");
        stats.insert_scalar("dd", self.d_power());
        stats
    }
}

/// One batch of N samples of every generated signal: network-wide signals as
/// N × M matrices (rows are time samples), reference signals as N × r.
#[derive(Debug, Clone)]
pub struct BatchSet {
    pub signals: BTreeMap<String, DMatrix<f64>>,
    pub references: BTreeMap<String, DMatrix<f64>>,
}

impl BatchSet {
    pub fn signal(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.signals.get(name).ok_or_else(|| {
            DasfError::UnknownSignal(name.to_string(), self.declared())
        })
    }

    pub fn reference(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.references.get(name).ok_or_else(|| {
            DasfError::UnknownSignal(name.to_string(), self.declared())
        })
    }

    fn declared(&self) -> String {
        self.signals
            .keys()
            .chain(self.references.keys())
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn samples(&self) -> usize {
        self.signals
            .values()
            .next()
            .map(|m| m.nrows())
            .unwrap_or(0)
    }

    /// The columns of signal `name` owned by node `k`.
    pub fn node_slice(&self, name: &str, network: &NetworkModel, k: usize) -> Result<DMatrix<f64>> {
        let batch = self.signal(name)?;
        let range = network.channel_range(k);
        Ok(batch.columns(range.start, range.len()).into_owned())
    }

    /// Estimate all statistics of the batch: covariance of each network-wide
    /// signal, cross-covariance of y against each reference, and the mean
    /// squared norm of each reference.
    pub fn estimate_statistics(&self) -> Result<Statistics> {
        let dim = self
            .signals
            .values()
            .next()
            .map(|m| m.ncols())
            .ok_or_else(|| DasfError::InvalidModel("batch set has no signals".into()))?;
        let mut stats = Statistics::new(dim);
        for (name, batch) in &self.signals {
            stats.insert_cov(name, estimate_covariance(batch)?)?;
        }
        if let Some(y) = self.signals.get("y") {
            let n = y.nrows() as f64;
            for (name, reference) in &self.references {
                let cross = y.transpose() * reference / n;
                stats.insert_cross(&format!("y{name}"), cross)?;
                let power = reference.iter().map(|v| v * v).sum::<f64>() / n;
                stats.insert_scalar(&format!("{name}{name}"), power);
            }
        }
        Ok(stats)
    }
}

/// The data a DASF iteration runs on: a token for exact statistics, or a
/// fresh sample batch.
#[derive(Debug, Clone)]
pub enum IterationData {
    Oracle,
    Sampled(BatchSet),
}

/// Seeded source of signal batches for one simulated run.
#[derive(Debug, Clone)]
pub struct SignalSource {
    model: MixtureModel,
    mode: StatsMode,
    rng: ChaCha12Rng,
    oracle: Statistics,
}

impl SignalSource {
    /// Build a source with a freshly drawn mixing matrix. The generator state
    /// continues from the same stream that drew the mixing matrix, so a seed
    /// fully determines both the model and every batch.
    pub fn from_seed(
        seed: u64,
        channels: usize,
        references: usize,
        signal_var: f64,
        noise_var: f64,
        mode: StatsMode,
    ) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let model = MixtureModel::random(channels, references, signal_var, noise_var, &mut rng)?;
        let oracle = model.oracle_statistics();
        Ok(Self { model, mode, rng, oracle })
    }

    pub fn from_model(model: MixtureModel, seed: u64, mode: StatsMode) -> Self {
        let oracle = model.oracle_statistics();
        Self {
            model,
            mode,
            rng: ChaCha12Rng::seed_from_u64(seed),
            oracle,
        }
    }

    pub fn mode(&self) -> StatsMode {
        self.mode
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    /// Exact statistics of the generative model.
    pub fn oracle_statistics(&self) -> &Statistics {
        &self.oracle
    }

    /// Produce the data for the next iteration: an oracle token, or a fresh
    /// batch of `n` samples of d, n and y = A·d + n.
    pub fn draw(&mut self, n: usize) -> Result<IterationData> {
        match self.mode {
            StatsMode::Oracle => Ok(IterationData::Oracle),
            StatsMode::Sampled => Ok(IterationData::Sampled(self.draw_batch(n)?)),
        }
    }

    /// Draw a batch of `n` samples regardless of mode.
    pub fn draw_batch(&mut self, n: usize) -> Result<BatchSet> {
        if n < 1 {
            return Err(DasfError::InsufficientSamples { need: 1, got: n });
        }
        let m = self.model.channels();
        let r = self.model.references();
        let sd = self.model.signal_var.sqrt();
        let sn = self.model.noise_var.sqrt();
        let d = DMatrix::from_fn(n, r, |_, _| sd * self.rng.sample::<f64, _>(StandardNormal));
        let noise = DMatrix::from_fn(n, m, |_, _| sn * self.rng.sample::<f64, _>(StandardNormal));
        let y = &d * self.model.mixing.transpose() + &noise;
        let mut signals = BTreeMap::new();
        signals.insert("y".to_string(), y);
        signals.insert("n".to_string(), noise);
        let mut references = BTreeMap::new();
        references.insert("d".to_string(), d);
        Ok(BatchSet { signals, references })
    }
}

/// Sample covariance `(1/N)·YᵀY` of an `N × M` batch. Signals are generated
/// zero-mean, so no mean subtraction is applied. The result is exactly
/// symmetric by construction.
pub fn estimate_covariance(batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = batch.nrows();
    if n < 2 {
        return Err(DasfError::InsufficientSamples { need: 2, got: n });
    }
    let m = batch.ncols();
    let gram = batch.transpose() * batch / n as f64;
    // Mirror the upper triangle so C == Cᵀ holds bit-exactly.
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Render a batch as CSV with channel indices as the header.
pub fn batch_to_csv(batch: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..batch.ncols()).map(|c| format!("ch{c}")).collect();
    let _ = writeln!(out, "{}", header.join(","));
    for row in 0..batch.nrows() {
        let cells: Vec<String> = (0..batch.ncols()).map(|c| format!("{:e}", batch[(row, c)])).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}
