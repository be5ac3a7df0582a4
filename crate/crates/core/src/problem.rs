//! The optimization problem family: a smooth objective over filter outputs,
//! an optional per-node block-separable non-smooth term, and quadratic
//! equality/inequality constraints on filter outputs.
//!
//! A [`ProblemSpec`] holds the functions (which problem, which output
//! dimension); a [`ProblemData`] holds the statistics and deterministic
//! matrices for one instance, at either the network-wide dimension or a
//! compressed local dimension. All evaluation paths are shared between the
//! two, which is what makes the compressed local problems "the same problem
//! on smaller data".

use nalgebra::DMatrix;

use crate::block_norm::{prox_block_norm, ABlock};
use crate::error::{DasfError, Result};
use crate::linalg::{frob_inner, inv_sqrt_spd, symmetrize};
use crate::network::{NetworkModel, Partition};
use crate::signal::Statistics;

/// Absolute feasibility tolerance per scalar constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Which shipped problem this is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// max E‖xᵀy‖² s.t. E‖xᵀn‖² = 1, expressed as min −tr(XᵀΣ_yX)
    /// s.t. XᵀΣ_nX = I.
    MaxSnr,
    /// min −tr(XᵀΣ_yX) s.t. Xᵀ(DDᵀ)X = I with D = I.
    Pca,
    /// min E‖Xᵀy − d‖² + w·Σ_k ‖X_kᵀA_k‖_F with A_k = I.
    Mwf { reg_weight: f64 },
}

/// Where the quadratic form metric S of a constraint comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricSource {
    /// S = Σ_name, a statistics channel (compressed like any other signal).
    Covariance(String),
    /// S = DDᵀ for a known deterministic matrix D (compressed as X_kᵀD_k).
    Gram(DMatrix<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// Right-hand side of the quadratic constraint XᵀSX = R (entrywise).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRhs {
    Identity,
    Zero,
}

/// One matrix constraint XᵀSX − R = 0 (or ≤ 0), which expands into
/// Q(Q+1)/2 scalar constraints over the upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub metric: MetricSource,
    pub kind: ConstraintKind,
    pub rhs: ConstraintRhs,
}

/// Index of one scalar constraint: which quadratic constraint and which
/// (row, col) entry of its matrix form, with row ≤ col.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarConstraint {
    pub quad: usize,
    pub row: usize,
    pub col: usize,
}

/// Data of one problem instance at some dimension: the block partition, the
/// statistics, and the deterministic matrices.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub partition: Partition,
    pub stats: Statistics,
    pub b: Option<DMatrix<f64>>,
    pub a_blocks: Option<Vec<ABlock>>,
    pub constraints: Vec<QuadConstraint>,
}

impl ProblemData {
    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    /// Replace the statistics (e.g. with a fresh batch estimate), keeping the
    /// deterministic matrices.
    pub fn with_stats(&self, stats: Statistics) -> Result<ProblemData> {
        if stats.dim() != self.dim() {
            return Err(DasfError::Shape(format!(
                "statistics dimension {} does not match problem dimension {}",
                stats.dim(),
                self.dim()
            )));
        }
        Ok(ProblemData { stats, ..self.clone() })
    }

    /// Resolve the metric matrix S of constraint `j`.
    pub fn constraint_metric(&self, j: usize) -> Result<DMatrix<f64>> {
        match &self.constraints[j].metric {
            MetricSource::Covariance(name) => Ok(self.stats.cov(name)?.clone()),
            MetricSource::Gram(d) => Ok(symmetrize(&(d * d.transpose()))),
        }
    }
}

/// An M × Q spatial filter together with its per-node block partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEstimate {
    matrix: DMatrix<f64>,
    partition: Partition,
}

impl FilterEstimate {
    pub fn new(matrix: DMatrix<f64>, network: &NetworkModel) -> Result<Self> {
        if matrix.nrows() != network.total_channels() || matrix.ncols() != network.outputs() {
            return Err(DasfError::Shape(format!(
                "filter is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                network.total_channels(),
                network.outputs()
            )));
        }
        Ok(Self { matrix, partition: network.partition().clone() })
    }

    pub fn from_blocks(blocks: &[DMatrix<f64>], network: &NetworkModel) -> Result<Self> {
        if blocks.len() != network.node_count() {
            return Err(DasfError::Shape("wrong number of filter blocks".into()));
        }
        let q = network.outputs();
        let mut matrix = DMatrix::zeros(network.total_channels(), q);
        for (k, block) in blocks.iter().enumerate() {
            let range = network.channel_range(k);
            if block.nrows() != range.len() || block.ncols() != q {
                return Err(DasfError::Shape(format!("block {k} has wrong shape")));
            }
            matrix.rows_mut(range.start, range.len()).copy_from(block);
        }
        Ok(Self { matrix, partition: network.partition().clone() })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn block(&self, k: usize) -> DMatrix<f64> {
        let range = self.partition.range(k);
        self.matrix.rows(range.start, range.len()).into_owned()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }
}

/// The problem functions: smooth objective, optional block-separable
/// non-smooth term, constraint family.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    kind: ProblemKind,
    outputs: usize,
}

impl ProblemSpec {
    pub fn max_snr(outputs: usize) -> Self {
        Self { kind: ProblemKind::MaxSnr, outputs }
    }

    pub fn pca(outputs: usize) -> Self {
        Self { kind: ProblemKind::Pca, outputs }
    }

    pub fn mwf(outputs: usize, reg_weight: f64) -> Self {
        Self { kind: ProblemKind::Mwf { reg_weight }, outputs }
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Network-wide signals the algorithm must transmit in compressed form.
    pub fn required_signals(&self) -> &'static [&'static str] {
        match self.kind {
            ProblemKind::MaxSnr => &["y", "n"],
            ProblemKind::Pca | ProblemKind::Mwf { .. } => &["y"],
        }
    }

    /// Whether the problem carries a non-smooth block-separable term.
    pub fn has_gamma(&self) -> bool {
        matches!(self.kind, ProblemKind::Mwf { .. })
    }

    pub fn gamma_weight(&self) -> f64 {
        match self.kind {
            ProblemKind::Mwf { reg_weight } => reg_weight,
            _ => 0.0,
        }
    }

    /// Assemble the network-wide problem data from statistics.
    pub fn global_data(&self, network: &NetworkModel, stats: Statistics) -> Result<ProblemData> {
        if stats.dim() != network.total_channels() {
            return Err(DasfError::Shape(format!(
                "statistics dimension {} does not match network channels {}",
                stats.dim(),
                network.total_channels()
            )));
        }
        if self.outputs != network.outputs() {
            return Err(DasfError::Shape(format!(
                "problem outputs {} do not match network outputs {}",
                self.outputs,
                network.outputs()
            )));
        }
        let m = network.total_channels();
        let (a_blocks, constraints) = match self.kind {
            ProblemKind::MaxSnr => {
                stats.cov("y")?;
                stats.cov("n")?;
                (
                    None,
                    vec![QuadConstraint {
                        metric: MetricSource::Covariance("n".into()),
                        kind: ConstraintKind::Equality,
                        rhs: ConstraintRhs::Identity,
                    }],
                )
            }
            ProblemKind::Pca => {
                stats.cov("y")?;
                (
                    None,
                    vec![QuadConstraint {
                        metric: MetricSource::Gram(DMatrix::identity(m, m)),
                        kind: ConstraintKind::Equality,
                        rhs: ConstraintRhs::Identity,
                    }],
                )
            }
            ProblemKind::Mwf { .. } => {
                stats.cov("y")?;
                stats.cross("yd")?;
                stats.scalar("dd")?;
                let blocks = network
                    .partition()
                    .sizes()
                    .iter()
                    .map(|&s| ABlock::Identity(s))
                    .collect();
                (Some(blocks), Vec::new())
            }
        };
        Ok(ProblemData {
            partition: network.partition().clone(),
            stats,
            b: None,
            a_blocks,
            constraints,
        })
    }

    /// The smooth objective as a quadratic form:
    /// φ(X) = tr(Xᵀ H X) − 2·tr(Xᵀ P) + c.
    pub fn quadratic_form(&self, data: &ProblemData) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
        let dim = data.dim();
        match self.kind {
            ProblemKind::MaxSnr | ProblemKind::Pca => {
                let h = -data.stats.cov("y")?;
                Ok((h, DMatrix::zeros(dim, self.outputs), 0.0))
            }
            ProblemKind::Mwf { .. } => {
                let h = data.stats.cov("y")?.clone();
                let p = data.stats.cross("yd")?.clone();
                let c = data.stats.scalar("dd")?;
                Ok((h, p, c))
            }
        }
    }

    /// The matrix pair (A, S) of the generalized eigenvalue structure behind
    /// the problem: minimize −tr(XᵀAX) subject to XᵀSX = I.
    pub fn eigen_pair(&self, data: &ProblemData) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match self.kind {
            ProblemKind::MaxSnr => Ok((data.stats.cov("y")?.clone(), data.constraint_metric(0)?)),
            ProblemKind::Pca => Ok((data.stats.cov("y")?.clone(), data.constraint_metric(0)?)),
            ProblemKind::Mwf { .. } => Err(DasfError::Capability {
                op: "eigen_pair",
                reason: "the Wiener problem has no eigenvalue structure".into(),
            }),
        }
    }

    fn check_shape(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != data.dim() || x.ncols() != self.outputs {
            return Err(DasfError::Shape(format!(
                "filter is {}x{}, expected {}x{}",
                x.nrows(),
                x.ncols(),
                data.dim(),
                self.outputs
            )));
        }
        Ok(())
    }

    /// φ(X).
    pub fn smooth_value(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(data, x)?;
        match self.kind {
            ProblemKind::MaxSnr | ProblemKind::Pca => {
                let sigma_y = data.stats.cov("y")?;
                Ok(-frob_inner(x, &(sigma_y * x)))
            }
            ProblemKind::Mwf { .. } => {
                let sigma_y = data.stats.cov("y")?;
                let cross = data.stats.cross("yd")?;
                let dd = data.stats.scalar("dd")?;
                Ok(frob_inner(x, &(sigma_y * x)) - 2.0 * frob_inner(x, cross) + dd)
            }
        }
    }

    /// ∇φ(X).
    pub fn smooth_gradient(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(data, x)?;
        match self.kind {
            ProblemKind::MaxSnr | ProblemKind::Pca => {
                let sigma_y = data.stats.cov("y")?;
                Ok(-2.0 * (sigma_y * x))
            }
            ProblemKind::Mwf { .. } => {
                let sigma_y = data.stats.cov("y")?;
                let cross = data.stats.cross("yd")?;
                Ok(2.0 * (sigma_y * x - cross))
            }
        }
    }

    /// γ(XᵀA) = w·Σ_k ‖X_kᵀA_k‖_F, zero when the problem is smooth.
    pub fn gamma_value(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(data, x)?;
        let weight = self.gamma_weight();
        if !self.has_gamma() || weight == 0.0 {
            return Ok(0.0);
        }
        let blocks = data.a_blocks.as_ref().ok_or_else(|| DasfError::Capability {
            op: "gamma_value",
            reason: "problem data carries no A blocks".into(),
        })?;
        let mut total = 0.0;
        for (k, range) in data.partition.iter_ranges() {
            let x_k = x.rows(range.start, range.len()).into_owned();
            total += blocks[k].composed_norm(&x_k);
        }
        Ok(weight * total)
    }

    /// Proximal operator of step·γ: exact per-block prox. Step 0 is the
    /// identity; on a problem without a non-smooth term this is a capability
    /// error.
    pub fn prox_gamma(&self, data: &ProblemData, x: &DMatrix<f64>, step: f64) -> Result<DMatrix<f64>> {
        self.check_shape(data, x)?;
        if !self.has_gamma() {
            return Err(DasfError::Capability {
                op: "prox_gamma",
                reason: "problem has no non-smooth term".into(),
            });
        }
        if step < 0.0 {
            return Err(DasfError::InvalidModel("prox step must be non-negative".into()));
        }
        let t = step * self.gamma_weight();
        if t == 0.0 {
            return Ok(x.clone());
        }
        let blocks = data.a_blocks.as_ref().ok_or_else(|| DasfError::Capability {
            op: "prox_gamma",
            reason: "problem data carries no A blocks".into(),
        })?;
        let mut out = x.clone();
        for (k, range) in data.partition.iter_ranges() {
            let x_k = x.rows(range.start, range.len()).into_owned();
            let prox = prox_block_norm(&x_k, &blocks[k], t);
            out.rows_mut(range.start, range.len()).copy_from(&prox);
        }
        Ok(out)
    }

    /// The scalar constraints in a fixed enumeration order.
    pub fn scalar_constraints(&self, data: &ProblemData) -> Vec<ScalarConstraint> {
        let q = self.outputs;
        let mut out = Vec::new();
        for (j, _) in data.constraints.iter().enumerate() {
            for row in 0..q {
                for col in row..q {
                    out.push(ScalarConstraint { quad: j, row, col });
                }
            }
        }
        out
    }

    /// ϑ_j(X) for every scalar constraint, in enumeration order.
    pub fn constraint_values(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_shape(data, x)?;
        let mut out = Vec::new();
        for (j, quad) in data.constraints.iter().enumerate() {
            let s = data.constraint_metric(j)?;
            let gram = x.transpose() * &s * x;
            for row in 0..self.outputs {
                for col in row..self.outputs {
                    let target = match quad.rhs {
                        ConstraintRhs::Identity => {
                            if row == col {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        ConstraintRhs::Zero => 0.0,
                    };
                    out.push(gram[(row, col)] - target);
                }
            }
        }
        Ok(out)
    }

    /// ∇ϑ_j(X) for every scalar constraint, in enumeration order.
    pub fn constraint_gradients(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.check_shape(data, x)?;
        let q = self.outputs;
        let mut out = Vec::new();
        for j in 0..data.constraints.len() {
            let s = data.constraint_metric(j)?;
            let sx = &s * x;
            for row in 0..q {
                for col in row..q {
                    let mut grad = DMatrix::zeros(x.nrows(), q);
                    if row == col {
                        grad.set_column(row, &(sx.column(row) * 2.0));
                    } else {
                        grad.set_column(row, &sx.column(col));
                        grad.set_column(col, &sx.column(row));
                    }
                    out.push(grad);
                }
            }
        }
        Ok(out)
    }

    /// Kind of every scalar constraint, in enumeration order.
    pub fn scalar_constraint_kinds(&self, data: &ProblemData) -> Vec<ConstraintKind> {
        self.scalar_constraints(data)
            .iter()
            .map(|sc| data.constraints[sc.quad].kind)
            .collect()
    }

    /// Largest constraint violation (0 for unconstrained problems).
    pub fn max_violation(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<f64> {
        let values = self.constraint_values(data, x)?;
        let kinds = self.scalar_constraint_kinds(data);
        let mut worst: f64 = 0.0;
        for (v, kind) in values.iter().zip(kinds.iter()) {
            let violation = match kind {
                ConstraintKind::Equality => v.abs(),
                ConstraintKind::Inequality => v.max(0.0),
            };
            worst = worst.max(violation);
        }
        Ok(worst)
    }

    pub fn is_feasible(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<bool> {
        Ok(self.max_violation(data, x)? <= FEASIBILITY_TOL)
    }

    /// The extended objective L(X) = φ + γ + δ_constraints: returns +∞ when
    /// any constraint is violated beyond the feasibility tolerance.
    pub fn evaluate(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<f64> {
        if !self.is_feasible(data, x)? {
            return Ok(f64::INFINITY);
        }
        Ok(self.smooth_value(data, x)? + self.gamma_value(data, x)?)
    }

    /// Feasibility map for the shipped constraint sets: the metric
    /// normalization X ← X·(XᵀSX)^{−1/2}. Identity for unconstrained
    /// problems; errors on degenerate points (e.g. X = 0).
    pub fn project(&self, data: &ProblemData, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(data, x)?;
        if data.constraints.is_empty() {
            return Ok(x.clone());
        }
        if data.constraints.len() > 1 {
            return Err(DasfError::Capability {
                op: "project",
                reason: "no projection shipped for multiple constraint blocks".into(),
            });
        }
        if data.constraints[0].rhs != ConstraintRhs::Identity {
            return Err(DasfError::Capability {
                op: "project",
                reason: "no projection shipped for zero right-hand sides".into(),
            });
        }
        let s = data.constraint_metric(0)?;
        let gram = symmetrize(&(x.transpose() * &s * x));
        let correction = inv_sqrt_spd(&gram, 1e-14).map_err(|_| {
            DasfError::DegeneratePoint("projection undefined: XᵀSX is singular".into())
        })?;
        Ok(x * correction)
    }
}

/// Caching wrapper of L for repeated evaluation at the same point.
#[derive(Debug)]
pub struct ExtendedObjective<'a> {
    spec: &'a ProblemSpec,
    data: &'a ProblemData,
    cache: Option<(DMatrix<f64>, f64)>,
}

impl<'a> ExtendedObjective<'a> {
    pub fn new(spec: &'a ProblemSpec, data: &'a ProblemData) -> Self {
        Self { spec, data, cache: None }
    }

    pub fn value(&mut self, x: &DMatrix<f64>) -> Result<f64> {
        if let Some((cached_x, cached_v)) = &self.cache {
            if cached_x == x {
                return Ok(*cached_v);
            }
        }
        let v = self.spec.evaluate(self.data, x)?;
        self.cache = Some((x.clone(), v));
        Ok(v)
    }
}

/// Central finite-difference gradient of a scalar function of X. Test and
/// fallback oracle for user-supplied functions.
pub fn fd_gradient<F>(f: F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let mut grad = DMatrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let orig = probe[(r, c)];
            probe[(r, c)] = orig + h;
            let plus = f(&probe);
            probe[(r, c)] = orig - h;
            let minus = f(&probe);
            probe[(r, c)] = orig;
            grad[(r, c)] = (plus - minus) / (2.0 * h);
        }
    }
    grad
}
