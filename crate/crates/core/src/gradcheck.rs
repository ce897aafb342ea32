//! Independent gradient oracles.
//!
//! Two references are provided. [`dense_reference`] evaluates a kernel with
//! dense arithmetic, forms its full Jacobian from the closed-form partial
//! derivatives and contracts the Jacobian with an adjoint. [`finite_difference_grad`]
//! differentiates any scalar function with central differences.
//!
//! [`run_suite`] checks every taped kernel against both references on
//! seeded random instances.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Value, Var};
use crate::csr::{mask_to, same_pattern, CsrMatrix};
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{dim_mismatch, Error, Result};
use crate::solve::Triangle;

/// Largest dimension accepted by the dense reference.
pub const SIZE_CAP: usize = 128;

/// Relative step of the central differences: `h = STEP · max(1, |θ|)`.
pub const STEP: f64 = 1e-6;

/// An entry passes when either bound holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerance {
    pub const FINITE_DIFFERENCE: Tolerance = Tolerance { rel: 1e-5, abs: 1e-8 };
    pub const ORACLE: Tolerance = Tolerance { rel: 1e-10, abs: 1e-10 };

    pub fn accepts(&self, analytic: f64, reference: f64) -> bool {
        let (rel, abs) = entry_error(analytic, reference);
        rel <= self.rel || abs <= self.abs
    }
}

fn entry_error(analytic: f64, reference: f64) -> (f64, f64) {
    let abs = (analytic - reference).abs();
    let scale = analytic.abs().max(reference.abs());
    let rel = if scale == 0.0 { 0.0 } else { abs / scale };
    (rel, abs)
}

/// The kernels covered by the dense reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum Kernel {
    Spmv,
    Spspmm,
    Spdmm,
    SpAdd { alpha: f64, beta: f64 },
    Sptrsv { triangle: Triangle, unit_diag: bool },
    Spsolve,
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Spmv => "spmv",
            Kernel::Spspmm => "spspmm",
            Kernel::Spdmm => "spdmm",
            Kernel::SpAdd { .. } => "sp_add",
            Kernel::Sptrsv { .. } => "sptrsv",
            Kernel::Spsolve => "spsolve",
        }
    }
}

/// Dense output of a kernel together with the adjoints of both operands.
/// Vectors are stored as one-column matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseReference {
    pub output: DenseMatrix,
    pub grad_a: DenseMatrix,
    pub grad_b: DenseMatrix,
}

fn check_cap(m: &DenseMatrix) -> Result<()> {
    let n = m.nrows().max(m.ncols());
    if n > SIZE_CAP {
        return Err(Error::SizeCap { n, cap: SIZE_CAP });
    }
    Ok(())
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn dense_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(dim_mismatch("dense_inverse", "square matrix", format!("{:?}", a.shape())));
    }
    let mut m = a.clone();
    let mut inv = DenseMatrix::identity(n);
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs()))
            .unwrap_or(c);
        if m[(p, c)] == 0.0 {
            return Err(Error::Singular { col: c });
        }
        for j in 0..n {
            m.as_mut_slice().swap(c * n + j, p * n + j);
            inv.as_mut_slice().swap(c * n + j, p * n + j);
        }
        let d = m[(c, c)];
        for j in 0..n {
            m[(c, j)] /= d;
            inv[(c, j)] /= d;
        }
        for i in 0..n {
            let f = m[(i, c)];
            if i == c || f == 0.0 {
                continue;
            }
            for j in 0..n {
                m[(i, j)] -= f * m[(c, j)];
                inv[(i, j)] -= f * inv[(c, j)];
            }
        }
    }
    Ok(inv)
}

fn effective_triangle(a: &DenseMatrix, triangle: Triangle, unit_diag: bool) -> DenseMatrix {
    let mut t = a.clone();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let outside = match triangle {
                Triangle::Lower => j > i,
                Triangle::Upper => j < i,
            };
            if outside {
                t[(i, j)] = 0.0;
            }
        }
        if unit_diag {
            t[(i, i)] = 1.0;
        }
    }
    t
}

/// Dense evaluation of `kernel`.
pub fn dense_forward(kernel: &Kernel, a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_cap(a)?;
    check_cap(b)?;
    match kernel {
        Kernel::Spmv | Kernel::Spspmm | Kernel::Spdmm => a.matmul(b),
        Kernel::SpAdd { alpha, beta } => {
            if a.shape() != b.shape() {
                return Err(dim_mismatch("dense sp_add", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
            }
            let values = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| alpha * x + beta * y).collect();
            DenseMatrix::new(a.nrows(), a.ncols(), values)
        }
        Kernel::Sptrsv { triangle, unit_diag } => {
            dense_inverse(&effective_triangle(a, *triangle, *unit_diag))?.matmul(b)
        }
        Kernel::Spsolve => dense_inverse(a)?.matmul(b),
    }
}

/// Full Jacobians of the row-major flattened output with respect to the
/// row-major flattened operands.
pub fn dense_jacobians(kernel: &Kernel, a: &DenseMatrix, b: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let out = dense_forward(kernel, a, b)?;
    let (m, n) = out.shape();
    let mut ja = DenseMatrix::zeros(m * n, a.nrows() * a.ncols());
    let mut jb = DenseMatrix::zeros(m * n, b.nrows() * b.ncols());
    match kernel {
        Kernel::Spmv | Kernel::Spspmm | Kernel::Spdmm => {
            // C = AB: dC_ij/dA_iq = B_qj, dC_ij/dB_qj = A_iq
            let k = a.ncols();
            for i in 0..m {
                for j in 0..n {
                    for q in 0..k {
                        ja[(i * n + j, i * k + q)] = b[(q, j)];
                        jb[(i * n + j, q * n + j)] = a[(i, q)];
                    }
                }
            }
        }
        Kernel::SpAdd { alpha, beta } => {
            for o in 0..m * n {
                ja[(o, o)] = *alpha;
                jb[(o, o)] = *beta;
            }
        }
        Kernel::Sptrsv { .. } | Kernel::Spsolve => {
            // X = G B with G = T⁻¹: dX_ij/dT_pq = -G_ip X_qj, dX_ij/dB_pj = G_ip
            let g = match kernel {
                Kernel::Sptrsv { triangle, unit_diag } => {
                    dense_inverse(&effective_triangle(a, *triangle, *unit_diag))?
                }
                _ => dense_inverse(a)?,
            };
            let na = a.ncols();
            for i in 0..m {
                for j in 0..n {
                    for p in 0..na {
                        for q in 0..na {
                            let free = match kernel {
                                Kernel::Sptrsv { triangle, unit_diag } => {
                                    let inside = match triangle {
                                        Triangle::Lower => q <= p,
                                        Triangle::Upper => q >= p,
                                    };
                                    inside && !(*unit_diag && p == q)
                                }
                                _ => true,
                            };
                            if free {
                                ja[(i * n + j, p * na + q)] = -g[(i, p)] * out[(q, j)];
                            }
                        }
                        jb[(i * n + j, p * n + j)] = g[(i, p)];
                    }
                }
            }
        }
    }
    Ok((ja, jb))
}

/// Output and adjoints `Jᵀ v` of `kernel`, with `v` shaped like the output.
pub fn dense_reference(kernel: &Kernel, a: &DenseMatrix, b: &DenseMatrix, v: &DenseMatrix) -> Result<DenseReference> {
    let output = dense_forward(kernel, a, b)?;
    if v.shape() != output.shape() {
        return Err(dim_mismatch("dense_reference", format!("{:?}", output.shape()), format!("{:?}", v.shape())));
    }
    let (ja, jb) = dense_jacobians(kernel, a, b)?;
    let contract = |j: &DenseMatrix, rows: usize, cols: usize| {
        let v = DenseMatrix::new(1, v.as_slice().len(), v.as_slice().to_vec())?;
        let flat = v.matmul(j)?;
        DenseMatrix::new(rows, cols, flat.into_vec())
    };
    Ok(DenseReference {
        grad_a: contract(&ja, a.nrows(), a.ncols())?,
        grad_b: contract(&jb, b.nrows(), b.ncols())?,
        output,
    })
}

/// Central-difference gradient of `loss` at `theta`, with per-entry step
/// `h_rel · max(1, |θᵢ|)`.
pub fn finite_difference_grad<F>(mut loss: F, theta: &[f64], h_rel: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if h_rel.is_nan() || h_rel <= 0.0 {
        return Err(Error::Domain(format!("finite difference step must be positive, got {h_rel}")));
    }
    let mut work = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = h_rel * theta[i].abs().max(1.0);
        work[i] = theta[i] + h;
        let up = loss(&work)?;
        work[i] = theta[i] - h;
        let down = loss(&work)?;
        work[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss while perturbing entry {i}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Error summary for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub failed_entries: usize,
    pub passed: bool,
}

impl ParamCheck {
    pub fn compare(name: impl Into<String>, analytic: &[f64], reference: &[f64], tol: Tolerance) -> Result<Self> {
        if analytic.len() != reference.len() {
            return Err(dim_mismatch("gradient comparison", reference.len(), analytic.len()));
        }
        let mut check = ParamCheck {
            name: name.into(),
            entries: analytic.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            failed_entries: 0,
            passed: true,
        };
        for (&a, &r) in analytic.iter().zip(reference) {
            let (rel, abs) = entry_error(a, r);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_error = check.max_abs_error.max(abs);
            if !(tol.accepts(a, r) && a.is_finite()) {
                check.failed_entries += 1;
            }
        }
        check.passed = check.failed_entries == 0;
        Ok(check)
    }
}

/// Result of comparing taped gradients with a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub tolerance: Tolerance,
    pub params: Vec<ParamCheck>,
    pub passed: bool,
}

impl GradcheckReport {
    fn from_params(step: f64, tolerance: Tolerance, params: Vec<ParamCheck>) -> Self {
        let passed = params.iter().all(|p| p.passed);
        GradcheckReport {
            step,
            tolerance,
            params,
            passed,
        }
    }
}

fn with_flat(value: &Value, flat: &[f64]) -> Value {
    let mut v = value.clone();
    v.flat_mut().copy_from_slice(flat);
    v
}

/// Compares the tape gradient of `build` with central differences over the
/// stored entries of every parameter.
///
/// `build` receives the tape and one leaf per parameter and returns the
/// scalar loss node.
///
/// ```
/// use sparsegrad::gradcheck::{check_gradients, Tolerance};
/// use sparsegrad::{DenseVector, Value};
///
/// let x = Value::from(DenseVector::new(vec![1.0, 2.0]));
/// let report = check_gradients(&[x], |tape, p| tape.dot(p[0], p[0]), Tolerance::FINITE_DIFFERENCE).unwrap();
/// assert!(report.passed);
/// ```
pub fn check_gradients<F>(params: &[Value], build: F, tolerance: Tolerance) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let evaluate = |values: &[Value]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v.clone())).collect();
        let root = build(&mut tape, &vars)?;
        Ok((tape, vars, root))
    };
    let (tape, vars, root) = evaluate(params)?;
    let grads = tape.backward(root)?;
    let mut checks = Vec::with_capacity(params.len());
    for (k, (param, var)) in params.iter().zip(&vars).enumerate() {
        let analytic = grads
            .get(*var)
            .ok_or_else(|| Error::Domain(format!("parameter {k} has no gradient")))?;
        if let (Value::Sparse(p), Value::Sparse(g)) = (param, analytic) {
            if !same_pattern(p.pattern(), g.pattern()) {
                return Err(Error::InvalidStructure(format!("gradient of parameter {k} left its pattern")));
            }
        }
        let fd = finite_difference_grad(
            |theta| {
                let mut perturbed = params.to_vec();
                perturbed[k] = with_flat(param, theta);
                let (tape, _, root) = evaluate(&perturbed)?;
                tape.value(root).as_scalar()
            },
            param.flat(),
            STEP,
        )?;
        checks.push(ParamCheck::compare(format!("param{k}"), analytic.flat(), &fd, tolerance)?);
    }
    Ok(GradcheckReport::from_params(STEP, tolerance, checks))
}

/// Sparse matrix with each entry present independently with probability
/// `density` and values uniform in `[-1, 1)`. `density >= 1` stores every
/// entry.
pub fn random_sparse<R: Rng>(rng: &mut R, nrows: usize, ncols: usize, density: f64) -> CsrMatrix {
    let mut triples = Vec::new();
    for i in 0..nrows {
        for j in 0..ncols {
            if density >= 1.0 || rng.random::<f64>() < density {
                triples.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
    }
    CsrMatrix::from_coo(nrows, ncols, &triples).expect("indices in range")
}

pub fn random_dense<R: Rng>(rng: &mut R, nrows: usize, ncols: usize) -> DenseMatrix {
    let values = (0..nrows * ncols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::new(nrows, ncols, values).expect("shape matches")
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> DenseVector {
    DenseVector::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Random square matrix on a random pattern that always holds the
/// diagonal. Each diagonal entry exceeds its row's off-diagonal absolute sum
/// by at least one, so the matrix is well conditioned.
pub fn random_dominant<R: Rng>(rng: &mut R, n: usize, density: f64, keep: impl Fn(usize, usize) -> bool) -> CsrMatrix {
    let mut triples = Vec::new();
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j && keep(i, j) && (density >= 1.0 || rng.random::<f64>() < density) {
                let v: f64 = rng.random_range(-1.0..1.0);
                off += v.abs();
                triples.push((i, j, v));
            }
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        triples.push((i, i, sign * (1.0 + off + rng.random::<f64>())));
    }
    CsrMatrix::from_coo(n, n, &triples).expect("indices in range")
}

/// Parameters of the random kernel suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub instances_per_kernel: usize,
    pub sizes: Vec<usize>,
    pub densities: Vec<f64>,
    pub finite_difference: Tolerance,
    pub oracle: Tolerance,
    /// Bound on `max |sparse - dense| / max(1, max |dense|)` for forwards.
    pub forward_tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            instances_per_kernel: 20,
            sizes: vec![4, 8, 16, 32],
            densities: vec![0.1, 0.3, 1.0],
            finite_difference: Tolerance::FINITE_DIFFERENCE,
            oracle: Tolerance::ORACLE,
            forward_tol: 1e-12,
        }
    }
}

/// Checks of one random kernel instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub kernel: Kernel,
    pub n: usize,
    pub density: f64,
    pub seed: u64,
    pub forward_error: f64,
    pub forward_passed: bool,
    pub mask_preserved: bool,
    pub oracle: GradcheckReport,
    pub finite_difference: GradcheckReport,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub instances: Vec<InstanceReport>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn kernel_passed(&self, name: &str) -> bool {
        self.instances
            .iter()
            .filter(|r| r.kernel.name() == name)
            .all(|r| r.passed)
    }
}

/// Operands of one random instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub kernel: Kernel,
    pub a: CsrMatrix,
    pub b: Value,
    pub adjoint: Value,
}

impl Instance {
    pub fn random(kernel: Kernel, n: usize, density: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let (a, b): (CsrMatrix, Value) = match kernel {
            Kernel::Spmv => (random_sparse(rng, n, n, density), random_vector(rng, n).into()),
            Kernel::Spspmm => (
                random_sparse(rng, n, n, density),
                random_sparse(rng, n, n, density).into(),
            ),
            Kernel::Spdmm => (random_sparse(rng, n, n, density), random_dense(rng, n, 3).into()),
            Kernel::SpAdd { .. } => (
                random_sparse(rng, n, n, density),
                random_sparse(rng, n, n, density).into(),
            ),
            Kernel::Sptrsv { triangle, unit_diag } => {
                let t = random_dominant(rng, n, density, |i, j| match triangle {
                    Triangle::Lower => j < i,
                    Triangle::Upper => j > i,
                });
                let t = if unit_diag {
                    // off-diagonals are scaled so the unit diagonal dominates
                    let dense = t.to_dense();
                    let values = t
                        .pattern()
                        .rowptr()
                        .windows(2)
                        .enumerate()
                        .flat_map(|(i, w)| {
                            let d = dense[(i, i)].abs();
                            t.values()[w[0]..w[1]].iter().map(move |v| v / (2.0 * d)).collect::<Vec<_>>()
                        })
                        .collect();
                    t.with_values(values)?
                } else {
                    t
                };
                (t, random_vector(rng, n).into())
            }
            Kernel::Spsolve => (random_dominant(rng, n, density, |_, _| true), random_vector(rng, n).into()),
        };
        let mut instance = Instance {
            kernel,
            a,
            b,
            adjoint: Value::Scalar(0.0),
        };
        let out = instance.forward(&instance.a, &instance.b)?;
        instance.adjoint = match out {
            Value::Vector(v) => random_vector(rng, v.len()).into(),
            Value::Matrix(m) => random_dense(rng, m.nrows(), m.ncols()).into(),
            Value::Sparse(s) => {
                let values = (0..s.nnz()).map(|_| rng.random_range(-1.0..1.0)).collect();
                s.with_values(values)?.into()
            }
            Value::Scalar(_) => unreachable!("kernels return arrays"),
        };
        Ok(instance)
    }

    fn record(&self, tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
        match self.kernel {
            Kernel::Spmv => tape.spmv(a, b),
            Kernel::Spspmm => tape.spspmm(a, b),
            Kernel::Spdmm => tape.spdmm(a, b),
            Kernel::SpAdd { alpha, beta } => tape.sp_add(alpha, a, beta, b),
            Kernel::Sptrsv { triangle, unit_diag } => tape.sptrsv(a, b, triangle, unit_diag),
            Kernel::Spsolve => tape.spsolve(a, b),
        }
    }

    fn forward(&self, a: &CsrMatrix, b: &Value) -> Result<Value> {
        let mut tape = Tape::new();
        let a = tape.constant(a.clone());
        let b = tape.constant(b.clone());
        let out = self.record(&mut tape, a, b)?;
        Ok(tape.value(out).clone())
    }

    /// `⟨adjoint, kernel(a, b)⟩` recorded on `tape`.
    pub fn loss(&self, tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
        let out = self.record(tape, a, b)?;
        let flat = match tape.value(out) {
            Value::Sparse(_) => tape.values(out)?,
            _ => out,
        };
        let w = match &self.adjoint {
            Value::Sparse(s) => Value::from(DenseVector::new(s.values().to_vec())),
            other => other.clone(),
        };
        let w = tape.constant(w);
        tape.dot(flat, w)
    }

    pub fn check(&self, config: &SuiteConfig, density: f64, seed: u64) -> Result<InstanceReport> {
        let n = self.a.nrows();
        let to_dense = |v: &Value| -> Result<DenseMatrix> {
            match v {
                Value::Vector(x) => DenseMatrix::new(x.len(), 1, x.as_slice().to_vec()),
                Value::Matrix(m) => Ok(m.clone()),
                Value::Sparse(s) => Ok(s.to_dense()),
                Value::Scalar(_) => Err(Error::Domain("scalar operand".into())),
            }
        };
        let da = self.a.to_dense();
        let db = to_dense(&self.b)?;
        let dv = to_dense(&self.adjoint)?;
        let reference = dense_reference(&self.kernel, &da, &db, &dv)?;

        let out = self.forward(&self.a, &self.b)?;
        let dout = to_dense(&out)?;
        let scale = reference.output.max_abs().max(1.0);
        let forward_error = dout
            .as_slice()
            .iter()
            .zip(reference.output.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
            / scale;

        let mut tape = Tape::new();
        let a = tape.param(self.a.clone());
        let b = tape.param(self.b.clone());
        let root = self.loss(&mut tape, a, b)?;
        let grads = tape.backward(root)?;
        let ga = grads.sparse(a).ok_or_else(|| Error::Domain("missing sparse gradient".into()))?;
        let gb = grads.get(b).ok_or_else(|| Error::Domain("missing gradient".into()))?;
        let mut mask_preserved = same_pattern(ga.pattern(), self.a.pattern());
        let ref_b: Vec<f64> = match (&self.b, gb) {
            (Value::Sparse(bs), Value::Sparse(gbs)) => {
                mask_preserved &= same_pattern(gbs.pattern(), bs.pattern());
                mask_to(&reference.grad_b, bs.pattern())?.into_values()
            }
            _ => reference.grad_b.as_slice().to_vec(),
        };
        let ref_a = mask_to(&reference.grad_a, self.a.pattern())?.into_values();
        let oracle = GradcheckReport::from_params(
            0.0,
            config.oracle,
            vec![
                ParamCheck::compare("a", ga.values(), &ref_a, config.oracle)?,
                ParamCheck::compare("b", gb.flat(), &ref_b, config.oracle)?,
            ],
        );

        let params = [Value::from(self.a.clone()), self.b.clone()];
        let mut finite_difference =
            check_gradients(&params, |tape, p| self.loss(tape, p[0], p[1]), config.finite_difference)?;
        finite_difference.params[0].name = "a".into();
        finite_difference.params[1].name = "b".into();

        let forward_passed = forward_error <= config.forward_tol;
        let passed = forward_passed && mask_preserved && oracle.passed && finite_difference.passed;
        Ok(InstanceReport {
            kernel: self.kernel,
            n,
            density,
            seed,
            forward_error,
            forward_passed,
            mask_preserved,
            oracle,
            finite_difference,
            passed,
        })
    }
}

/// The kernel variants exercised by [`run_suite`], in order.
pub fn suite_kernels() -> Vec<Kernel> {
    vec![
        Kernel::Spmv,
        Kernel::Spspmm,
        Kernel::Spdmm,
        Kernel::SpAdd { alpha: 0.7, beta: -1.3 },
        Kernel::Sptrsv {
            triangle: Triangle::Lower,
            unit_diag: false,
        },
        Kernel::Spsolve,
    ]
}

/// Triangular variants cycled through by the `sptrsv` instances.
fn trsv_variant(k: usize) -> Kernel {
    let triangle = if k.is_multiple_of(2) { Triangle::Lower } else { Triangle::Upper };
    Kernel::Sptrsv {
        triangle,
        unit_diag: k % 4 >= 2,
    }
}

/// Runs `instances_per_kernel` random instances of every kernel, cycling
/// through sizes and densities. Instance seeds are drawn from `config.seed`.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    if config.sizes.is_empty() || config.densities.is_empty() {
        return Err(Error::Domain("suite needs at least one size and one density".into()));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
    let mut instances = Vec::new();
    for kernel in suite_kernels() {
        for k in 0..config.instances_per_kernel {
            let n = config.sizes[k % config.sizes.len()];
            let density = config.densities[(k / config.sizes.len()) % config.densities.len()];
            let kernel = match kernel {
                Kernel::Sptrsv { .. } => trsv_variant(k),
                other => other,
            };
            let seed = seeds.next_u64();
            let instance = Instance::random(kernel, n, density, seed)?;
            instances.push(instance.check(config, density, seed)?);
        }
    }
    let passed = instances.iter().all(|r| r.passed);
    Ok(SuiteReport {
        config: config.clone(),
        instances,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::poisson_1d;

    #[test]
    fn finite_difference_of_square_norm() {
        let g = finite_difference_grad(|t| Ok(t[0] * t[0] + t[1] * t[1]), &[1.0, 2.0], STEP).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        assert!(finite_difference_grad(|_| Ok(f64::NAN), &[1.0], STEP).is_err());
        assert!(finite_difference_grad(|t| Ok(t[0]), &[1.0], 0.0).is_err());
    }

    #[test]
    fn dense_spmv_matches_sparse_on_poisson() {
        let a = poisson_1d(3).unwrap();
        let x = DenseMatrix::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let dense = dense_forward(&Kernel::Spmv, &a.to_dense(), &x).unwrap();
        let sparse = crate::kernels::spmv(&a, &DenseVector::new(vec![1.0, 2.0, 3.0])).unwrap();
        for i in 0..3 {
            assert!((dense[(i, 0)] - sparse[i]).abs() <= 1e-14);
        }
    }

    #[test]
    fn size_cap() {
        let big = DenseMatrix::zeros(SIZE_CAP + 1, 1);
        assert!(matches!(
            dense_forward(&Kernel::Spmv, &DenseMatrix::zeros(1, SIZE_CAP + 1), &big),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn dense_inverse_of_poisson() {
        let a = poisson_1d(4).unwrap().to_dense();
        let inv = dense_inverse(&a).unwrap();
        let prod = a.matmul(&inv).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - e).abs() < 1e-14);
            }
        }
        assert!(dense_inverse(&DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn spspmm_forward_within_oracle_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sparse(&mut rng, 16, 16, 0.2);
        let b = random_sparse(&mut rng, 16, 16, 0.2);
        let c = crate::kernels::spspmm(&a, &b).unwrap().to_dense();
        let d = dense_forward(&Kernel::Spspmm, &a.to_dense(), &b.to_dense()).unwrap();
        for (x, y) in c.as_slice().iter().zip(d.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn sp_add_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_sparse(&mut rng, 8, 8, 0.3);
        let b = random_sparse(&mut rng, 8, 8, 0.3);
        let s = crate::kernels::sp_add(0.5, &a, -2.0, &b).unwrap().to_dense();
        let kernel = Kernel::SpAdd { alpha: 0.5, beta: -2.0 };
        let d = dense_forward(&kernel, &a.to_dense(), &b.to_dense()).unwrap();
        assert_eq!(s, d);
    }

    #[test]
    fn spsolve_adjoint_against_finite_differences() {
        let a = poisson_1d(3).unwrap();
        let b = DenseVector::new(vec![1.0, 0.0, 2.0]);
        let v = DenseVector::new(vec![0.3, -1.0, 0.5]);
        let (x, lu) = crate::solve::spsolve_factored(&a, &b).unwrap();
        let (ga, _) = crate::solve::spsolve_vjp(&v, &a, &x, &lu).unwrap();
        let fd = finite_difference_grad(
            |t| {
                let x = crate::solve::spsolve(&a.with_values(t.to_vec())?, &b)?;
                x.dot(&v)
            },
            a.values(),
            STEP,
        )
        .unwrap();
        let check = ParamCheck::compare("a", ga.values(), &fd, Tolerance { rel: 1e-6, abs: 0.0 }).unwrap();
        assert!(check.passed, "{check:?}");
    }

    #[test]
    fn single_instances_pass() {
        let config = SuiteConfig::default();
        for kernel in suite_kernels().into_iter().chain((0..4).map(trsv_variant)) {
            for (n, density) in [(4, 1.0), (8, 0.3)] {
                let inst = Instance::random(kernel, n, density, 11).unwrap();
                let r = inst.check(&config, density, 11).unwrap();
                assert!(r.passed, "{r:?}");
            }
        }
    }
}
