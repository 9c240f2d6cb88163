//! Heisenberg-type matrix fields `B(x)`, their ε-completion and truncation.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::cutoff::Cutoff;
use crate::error::{Error, Result};

/// Upper bound on the state dimension; lets the hot paths use stack buffers.
pub const MAX_DIM: usize = 16;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Writes into the output slice (length `n` for gradients, `n*n` row-major for Hessians).
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A user supplied coefficient `h(x)` with optional analytic derivatives.
#[derive(Clone)]
pub struct CoefficientFn {
    value: ScalarFn,
    gradient: Option<VectorFn>,
    hessian: Option<VectorFn>,
}

impl CoefficientFn {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    fn fd_step(xk: f64) -> f64 {
        1e-5 * (1.0 + xk.abs())
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            g(x, out);
            return;
        }
        let mut y = [0.0; MAX_DIM];
        let y = &mut y[..x.len()];
        y.copy_from_slice(x);
        for k in 0..x.len() {
            let h = Self::fd_step(x[k]);
            y[k] = x[k] + h;
            let fp = (self.value)(y);
            y[k] = x[k] - h;
            let fm = (self.value)(y);
            y[k] = x[k];
            out[k] = (fp - fm) / (2.0 * h);
        }
    }

    fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        if let Some(h) = &self.hessian {
            h(x, out);
            return;
        }
        let n = x.len();
        let mut y = [0.0; MAX_DIM];
        let y = &mut y[..n];
        y.copy_from_slice(x);
        let mut gp = [0.0; MAX_DIM];
        let mut gm = [0.0; MAX_DIM];
        for k in 0..n {
            let h = Self::fd_step(x[k]);
            y[k] = x[k] + h;
            self.gradient_into(y, &mut gp[..n]);
            y[k] = x[k] - h;
            self.gradient_into(y, &mut gm[..n]);
            y[k] = x[k];
            for l in 0..n {
                out[l * n + k] = (gp[l] - gm[l]) / (2.0 * h);
            }
        }
        for k in 0..n {
            for l in 0..k {
                let s = 0.5 * (out[k * n + l] + out[l * n + k]);
                out[k * n + l] = s;
                out[l * n + k] = s;
            }
        }
    }
}

#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `offset + Σ slopes[k] x_k`; missing slopes are zero.
    Affine { offset: f64, slopes: Vec<f64> },
    Function(CoefficientFn),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Affine { offset, slopes } => {
                write!(f, "Affine({offset}, {slopes:?})")
            }
            Coefficient::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl Coefficient {
    pub fn affine(offset: f64, slopes: &[f64]) -> Self {
        Coefficient::Affine {
            offset,
            slopes: slopes.to_vec(),
        }
    }

    /// `Σ_k w_k x_k` over the listed `(k, w_k)` pairs.
    pub fn linear(terms: &[(usize, f64)]) -> Self {
        let len = terms.iter().map(|&(k, _)| k + 1).max().unwrap_or(0);
        let mut slopes = vec![0.0; len];
        for &(k, w) in terms {
            slopes[k] += w;
        }
        Coefficient::Affine { offset: 0.0, slopes }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Coefficient::Constant(_) => true,
            Coefficient::Affine { slopes, .. } => slopes.iter().all(|&s| s == 0.0),
            Coefficient::Function(_) => false,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Affine { offset, slopes } => {
                offset + slopes.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>()
            }
            Coefficient::Function(f) => (f.value)(x),
        }
    }

    /// Value, gradient into `grad`, and Hessian into `hess` when provided.
    pub fn eval(&self, x: &[f64], grad: &mut [f64], hess: Option<&mut [f64]>) -> f64 {
        match self {
            Coefficient::Constant(c) => {
                grad.fill(0.0);
                if let Some(h) = hess {
                    h.fill(0.0);
                }
                *c
            }
            Coefficient::Affine { slopes, .. } => {
                grad.fill(0.0);
                for (g, s) in grad.iter_mut().zip(slopes) {
                    *g = *s;
                }
                if let Some(h) = hess {
                    h.fill(0.0);
                }
                self.value(x)
            }
            Coefficient::Function(f) => {
                f.gradient_into(x, grad);
                if let Some(h) = hess {
                    f.hessian_into(x, h);
                }
                (f.value)(x)
            }
        }
    }

    /// Variables the coefficient provably does not depend on are those with a zero slope;
    /// only meaningful for the affine and constant kinds.
    fn affine_slopes(&self) -> Option<&[f64]> {
        match self {
            Coefficient::Constant(_) => Some(&[]),
            Coefficient::Affine { slopes, .. } => Some(slopes),
            Coefficient::Function(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub coef: Coefficient,
}

/// The matrix field `B(x)` of a Heisenberg-type structure, stored by its nonzero
/// coefficients (0-based `row`, `col`), plus the completion parameter ε and an
/// optional truncation level.
///
/// With ε > 0 the matrix gains `n - m` extra columns carrying ε on the diagonal
/// slots `(j, j)`, `j ≥ m`; the control dimension becomes `n`.
#[derive(Debug, Clone)]
pub struct HTypeStructure {
    name: String,
    n: usize,
    m: usize,
    entries: Vec<Entry>,
    epsilon: f64,
    truncation: Option<Cutoff>,
}

impl HTypeStructure {
    /// Builds a structure and enforces the triangular pattern: `h_11` a nonzero
    /// constant, no entries above the diagonal in the first `m` rows, and affine
    /// coefficients depending only on the admissible variables.
    pub fn new(name: impl Into<String>, n: usize, m: usize, entries: Vec<(usize, usize, Coefficient)>) -> Result<Self> {
        let s = Self::unchecked(name, n, m, entries)?;
        s.check_pattern()?;
        Ok(s)
    }

    /// Like [`HTypeStructure::new`] but only validates dimensions and indices.
    pub fn unchecked(name: impl Into<String>, n: usize, m: usize, entries: Vec<(usize, usize, Coefficient)>) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::invalid("n", format!("must be in 1..={MAX_DIM}")));
        }
        if m == 0 || m > n {
            return Err(Error::invalid("m", "must satisfy 1 <= m <= n"));
        }
        let mut out: Vec<Entry> = Vec::with_capacity(entries.len());
        for (row, col, coef) in entries {
            if row >= n || col >= m {
                return Err(Error::invalid(
                    "entries",
                    format!("index ({}, {}) outside the {n}x{m} matrix", row + 1, col + 1),
                ));
            }
            if out.iter().any(|e| e.row == row && e.col == col) {
                return Err(Error::invalid("entries", format!("duplicate entry ({}, {})", row + 1, col + 1)));
            }
            if let Coefficient::Affine { slopes, .. } = &coef {
                if slopes.len() > n {
                    return Err(Error::invalid("entries", "affine slopes longer than n"));
                }
            }
            if matches!(coef, Coefficient::Constant(c) if c == 0.0) {
                continue;
            }
            out.push(Entry { row, col, coef });
        }
        out.sort_by_key(|e| (e.row, e.col));
        Ok(Self {
            name: name.into(),
            n,
            m,
            entries: out,
            epsilon: 0.0,
            truncation: None,
        })
    }

    pub(crate) fn check_pattern(&self) -> Result<()> {
        let h11 = self.entries.iter().find(|e| e.row == 0 && e.col == 0);
        match h11 {
            Some(e) if e.coef.is_constant() && e.coef.value(&[0.0; MAX_DIM][..self.n]) != 0.0 => {}
            _ => {
                return Err(Error::Structure {
                    row: 1,
                    col: 1,
                    reason: "h_11 must be a nonzero constant".into(),
                })
            }
        }
        for e in &self.entries {
            if e.row < self.m && e.col > e.row {
                return Err(Error::Structure {
                    row: e.row + 1,
                    col: e.col + 1,
                    reason: "entries above the diagonal must vanish in the first m rows".into(),
                });
            }
            if let Some(slopes) = e.coef.affine_slopes() {
                let allowed = self.allowed_vars(e.row);
                if let Some(k) = slopes.iter().enumerate().skip(allowed).find(|(_, &s)| s != 0.0).map(|(k, _)| k) {
                    return Err(Error::Structure {
                        row: e.row + 1,
                        col: e.col + 1,
                        reason: format!("depends on x_{}, only x_1..x_{allowed} are admissible", k + 1),
                    });
                }
            }
        }
        Ok(())
    }

    /// Number of leading variables row `row` (0-based) may depend on.
    pub fn allowed_vars(&self, row: usize) -> usize {
        if row < self.m {
            row
        } else {
            self.m
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid("epsilon", "must lie in [0, 1]"));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_truncation(mut self, level: Option<f64>) -> Result<Self> {
        self.truncation = level.map(Cutoff::new).transpose()?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn truncation(&self) -> Option<Cutoff> {
        self.truncation
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Number of columns of the evaluated matrix (`m` when ε = 0, `n` otherwise).
    pub fn control_dim(&self) -> usize {
        if self.epsilon > 0.0 {
            self.n
        } else {
            self.m
        }
    }

    fn truncate(&self, coef: &Coefficient, v: f64) -> f64 {
        match self.truncation {
            Some(c) if !coef.is_constant() => c.value(v),
            _ => v,
        }
    }

    /// Fills `out` (row-major `n × control_dim`) with the matrix at `x`.
    pub fn fill_b(&self, x: &[f64], out: &mut [f64]) {
        let cols = self.control_dim();
        out[..self.n * cols].fill(0.0);
        for e in &self.entries {
            out[e.row * cols + e.col] = self.truncate(&e.coef, e.coef.value(x));
        }
        if self.epsilon > 0.0 {
            for j in self.m..self.n {
                out[j * cols + j] = self.epsilon;
            }
        }
    }

    /// `B(x)`, `B^ε(x)` or `B^{ε,N}(x)` depending on the configured ε and truncation.
    pub fn matrix_b(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Error::check_dim(self.n, x.len())?;
        let cols = self.control_dim();
        let mut buf = vec![0.0; self.n * cols];
        self.fill_b(x, &mut buf);
        Ok(DMatrix::from_row_slice(self.n, cols, &buf))
    }

    /// Evaluates the matrix and, up to `order`, the derivatives of its nonconstant entries.
    pub fn eval_jet(&self, x: &[f64], order: usize, jet: &mut Jet) {
        debug_assert_eq!(jet.n, self.n);
        self.fill_b(x, &mut jet.b);
        jet.order = order;
        if order == 0 {
            return;
        }
        let n = self.n;
        for (a, &ei) in jet.active.iter().enumerate() {
            let e = &self.entries[ei];
            let g = &mut jet.grads[a * n..(a + 1) * n];
            let v = if order >= 2 {
                let h = &mut jet.hess[a * n * n..(a + 1) * n * n];
                e.coef.eval(x, g, Some(h))
            } else {
                e.coef.eval(x, g, None)
            };
            if let Some(c) = self.truncation {
                let (_, d1, d2) = c.eval(v);
                if order >= 2 {
                    let h = &mut jet.hess[a * n * n..(a + 1) * n * n];
                    for k in 0..n {
                        for l in 0..n {
                            h[k * n + l] = d1 * h[k * n + l] + d2 * g[k] * g[l];
                        }
                    }
                }
                for gk in g.iter_mut() {
                    *gk *= d1;
                }
            }
        }
    }

    pub fn new_jet(&self) -> Jet {
        Jet::new(self)
    }

    pub fn heisenberg() -> Self {
        Self::heisenberg_d(1).expect("valid preset").renamed("heisenberg1")
    }

    /// The `d`-dimensional Heisenberg group: `n = 2d + 1`, `m = 2d`, identity block
    /// on top and last row `(-x_{d+1}, …, -x_{2d}, x_1, …, x_d)`.
    pub fn heisenberg_d(d: usize) -> Result<Self> {
        if d == 0 || 2 * d + 1 > MAX_DIM {
            return Err(Error::invalid("d", format!("must be in 1..={}", (MAX_DIM - 1) / 2)));
        }
        let n = 2 * d + 1;
        let m = 2 * d;
        let mut entries = Vec::new();
        for i in 0..m {
            entries.push((i, i, Coefficient::Constant(1.0)));
        }
        for j in 0..d {
            entries.push((m, j, Coefficient::linear(&[(d + j, -1.0)])));
            entries.push((m, d + j, Coefficient::linear(&[(j, 1.0)])));
        }
        Self::new(format!("heisenberg-{d}"), n, m, entries)
    }

    /// Rows `(1, 0)` and `(0, x_1)` on the plane.
    pub fn grushin() -> Self {
        Self::new(
            "grushin",
            2,
            2,
            vec![(0, 0, Coefficient::Constant(1.0)), (1, 1, Coefficient::linear(&[(0, 1.0)]))],
        )
        .expect("valid preset")
    }

    /// `B = [I_m; 0]`: only the first `m` coordinates are controlled.
    pub fn degenerate(n: usize, m: usize) -> Result<Self> {
        let entries = (0..m).map(|i| (i, i, Coefficient::Constant(1.0))).collect();
        Self::new(format!("degenerate({n},{m})"), n, m, entries)
    }

    /// A 4×3 structure whose rows grow linearly; bounded `h_21 = x_1 / sqrt(1 + x_1²)`.
    pub fn linear_growth_example() -> Self {
        let h21 = CoefficientFn::new(|x: &[f64]| x[0] / (1.0 + x[0] * x[0]).sqrt())
            .with_gradient(|x: &[f64], g: &mut [f64]| {
                g.fill(0.0);
                g[0] = (1.0 + x[0] * x[0]).powf(-1.5);
            })
            .with_hessian(|x: &[f64], h: &mut [f64]| {
                h.fill(0.0);
                h[0] = -3.0 * x[0] * (1.0 + x[0] * x[0]).powf(-2.5);
            });
        let s12 = Coefficient::linear(&[(0, 1.0), (1, 1.0)]);
        let s123 = Coefficient::linear(&[(0, 1.0), (1, 1.0), (2, 1.0)]);
        let mut entries = vec![
            (0, 0, Coefficient::Constant(1.0)),
            (1, 0, Coefficient::Function(h21)),
            (1, 1, Coefficient::linear(&[(0, 1.0)])),
        ];
        for j in 0..3 {
            entries.push((2, j, s12.clone()));
            entries.push((3, j, s123.clone()));
        }
        Self::new("linear-growth-4x3", 4, 3, entries).expect("valid preset")
    }

    /// Resolves a preset name: `heisenberg1`, `heisenberg-d` (with `d`), `grushin`,
    /// `degenerate(n,m)`, `linear-growth-4x3`.
    pub fn from_preset(name: &str, d: Option<usize>) -> Result<Self> {
        let trimmed = name.trim();
        match trimmed {
            "heisenberg1" | "heisenberg" => Ok(Self::heisenberg()),
            "heisenberg-d" => Self::heisenberg_d(d.unwrap_or(2)),
            "grushin" => Ok(Self::grushin()),
            "linear-growth-4x3" => Ok(Self::linear_growth_example()),
            _ => {
                if let Some(args) = trimmed.strip_prefix("degenerate(").and_then(|r| r.strip_suffix(')')) {
                    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
                    if let [a, b] = parts.as_slice() {
                        if let (Ok(n), Ok(m)) = (a.parse(), b.parse()) {
                            return Self::degenerate(n, m);
                        }
                    }
                }
                Err(Error::invalid("structure.preset", format!("unknown preset `{trimmed}`")))
            }
        }
    }

    fn renamed(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }
}

/// Scratch holding `B(x)` and the derivatives of its nonconstant entries, with the
/// contractions the optimal-control code needs.
#[derive(Debug, Clone)]
pub struct Jet {
    n: usize,
    cols: usize,
    order: usize,
    b: Vec<f64>,
    active: Vec<usize>,
    active_rc: Vec<(usize, usize)>,
    grads: Vec<f64>,
    hess: Vec<f64>,
}

impl Jet {
    pub fn new(s: &HTypeStructure) -> Self {
        let n = s.n;
        let cols = s.control_dim();
        let active: Vec<usize> = s
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.coef.is_constant())
            .map(|(i, _)| i)
            .collect();
        let active_rc = active.iter().map(|&i| (s.entries[i].row, s.entries[i].col)).collect();
        Self {
            n,
            cols,
            order: 0,
            b: vec![0.0; n * cols],
            grads: vec![0.0; active.len() * n],
            hess: vec![0.0; active.len() * n * n],
            active,
            active_rc,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major `n × cols` matrix.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `q = p B`.
    pub fn row_times_b(&self, p: &[f64], q: &mut [f64]) {
        q[..self.cols].fill(0.0);
        for i in 0..self.n {
            let pi = p[i];
            if pi == 0.0 {
                continue;
            }
            let row = &self.b[i * self.cols..(i + 1) * self.cols];
            for j in 0..self.cols {
                q[j] += pi * row[j];
            }
        }
    }

    /// `v = B a`.
    pub fn b_times(&self, a: &[f64], v: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.b[i * self.cols..(i + 1) * self.cols];
            v[i] = row.iter().zip(a).map(|(b, a)| b * a).sum();
        }
    }

    /// `out_k = ∂_k (p B(x) a)` for fixed `p`, `a`.
    pub fn grad_pba(&self, p: &[f64], a: &[f64], out: &mut [f64]) {
        debug_assert!(self.order >= 1);
        let n = self.n;
        out[..n].fill(0.0);
        for (e, &(r, c)) in self.active_rc.iter().enumerate() {
            let w = p[r] * a[c];
            if w == 0.0 {
                continue;
            }
            let g = &self.grads[e * n..(e + 1) * n];
            for k in 0..n {
                out[k] += w * g[k];
            }
        }
    }

    /// `Q_jk = Σ_i p_i ∂_k h_ij`, row-major `cols × n`.
    pub fn q_matrix(&self, p: &[f64], out: &mut [f64]) {
        let n = self.n;
        out[..self.cols * n].fill(0.0);
        for (e, &(r, c)) in self.active_rc.iter().enumerate() {
            let g = &self.grads[e * n..(e + 1) * n];
            for k in 0..n {
                out[c * n + k] += p[r] * g[k];
            }
        }
    }

    /// `P_lk = Σ_j a_j ∂_k h_lj`, row-major `n × n`.
    pub fn p_matrix(&self, a: &[f64], out: &mut [f64]) {
        let n = self.n;
        out[..n * n].fill(0.0);
        for (e, &(r, c)) in self.active_rc.iter().enumerate() {
            let g = &self.grads[e * n..(e + 1) * n];
            for k in 0..n {
                out[r * n + k] += a[c] * g[k];
            }
        }
    }

    /// `S = Σ p_i a_j ∇²h_ij`, row-major `n × n`.
    pub fn s_matrix(&self, p: &[f64], a: &[f64], out: &mut [f64]) {
        debug_assert!(self.order >= 2);
        let nn = self.n * self.n;
        out[..nn].fill(0.0);
        for (e, &(r, c)) in self.active_rc.iter().enumerate() {
            let w = p[r] * a[c];
            if w == 0.0 {
                continue;
            }
            let h = &self.hess[e * nn..(e + 1) * nn];
            for k in 0..nn {
                out[k] += w * h[k];
            }
        }
    }

    pub fn has_variable_entries(&self) -> bool {
        !self.active.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }

    #[test]
    fn heisenberg_matrix_examples() {
        let h = HTypeStructure::heisenberg();
        let b = h.matrix_b(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(rows(&b), vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-2.0, 1.0]]);

        let he = HTypeStructure::heisenberg().with_epsilon(0.5).unwrap();
        let b = he.matrix_b(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            rows(&b),
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.5]]
        );
    }

    #[test]
    fn truncated_row_vanishes_far_out() {
        let s = HTypeStructure::heisenberg()
            .with_epsilon(0.3)
            .unwrap()
            .with_truncation(Some(2.0))
            .unwrap();
        let b = s.matrix_b(&[5.0, 0.0, 0.0]).unwrap();
        assert_eq!(rows(&b)[2], vec![0.0, 0.0, 0.3]);
        let b = s.matrix_b(&[1.5, -1.0, 0.0]).unwrap();
        assert_eq!(rows(&b)[2], vec![1.0, 1.5, 0.3]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let h = HTypeStructure::heisenberg();
        assert!(matches!(h.matrix_b(&[1.0, 2.0]), Err(Error::Dimension { expected: 3, got: 2 })));
    }

    #[test]
    fn pattern_violation_names_the_entry() {
        let err = HTypeStructure::new(
            "bad",
            3,
            2,
            vec![(0, 0, Coefficient::Constant(1.0)), (0, 1, Coefficient::Constant(1.0))],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Structure { row: 1, col: 2, .. }));

        let err = HTypeStructure::new(
            "bad",
            3,
            2,
            vec![
                (0, 0, Coefficient::Constant(1.0)),
                (1, 1, Coefficient::linear(&[(1, 1.0)])),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Structure { row: 2, col: 2, .. }));

        let err = HTypeStructure::new("bad", 2, 2, vec![(0, 0, Coefficient::linear(&[(1, 1.0)]))]).unwrap_err();
        assert!(matches!(err, Error::Structure { row: 1, col: 1, .. }));
    }

    #[test]
    fn presets_resolve() {
        assert_eq!(HTypeStructure::from_preset("heisenberg1", None).unwrap().n(), 3);
        let h2 = HTypeStructure::from_preset("heisenberg-d", Some(2)).unwrap();
        assert_eq!((h2.n(), h2.m()), (5, 4));
        let b = h2.matrix_b(&[1.0, 2.0, 3.0, 4.0, 0.0]).unwrap();
        assert_eq!(rows(&b)[4], vec![-3.0, -4.0, 1.0, 2.0]);
        let d = HTypeStructure::from_preset("degenerate(4, 2)", None).unwrap();
        assert_eq!((d.n(), d.m()), (4, 2));
        assert!(HTypeStructure::from_preset("nope", None).is_err());
        let g = HTypeStructure::grushin();
        assert_eq!(rows(&g.matrix_b(&[3.0, 1.0]).unwrap()), vec![vec![1.0, 0.0], vec![0.0, 3.0]]);
        assert_eq!(HTypeStructure::linear_growth_example().entries().len(), 9);
    }

    #[test]
    fn finite_difference_fallback_matches_analytic() {
        let f = CoefficientFn::new(|x: &[f64]| (x[0] * x[1]).sin());
        let c = Coefficient::Function(f);
        let x = [0.3, -0.7, 0.2];
        let mut g = [0.0; 3];
        let mut h = [0.0; 9];
        c.eval(&x, &mut g, Some(&mut h));
        let s = (x[0] * x[1]).sin();
        let co = (x[0] * x[1]).cos();
        assert!((g[0] - x[1] * co).abs() < 1e-9);
        assert!((g[1] - x[0] * co).abs() < 1e-9);
        assert!((h[0] + x[1] * x[1] * s).abs() < 1e-5);
        assert!((h[1] - (co - x[0] * x[1] * s)).abs() < 1e-5);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn truncated_jet_matches_finite_differences() {
        let s = HTypeStructure::heisenberg()
            .with_epsilon(0.2)
            .unwrap()
            .with_truncation(Some(1.0))
            .unwrap();
        let mut jet = s.new_jet();
        let x = [1.4, -1.7, 0.3];
        s.eval_jet(&x, 2, &mut jet);
        let p = [0.4, -0.3, 1.1];
        let a = [0.7, 0.2, -0.5];
        let pba = |y: &[f64]| {
            let b = s.matrix_b(y).unwrap();
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += p[i] * b[(i, j)] * a[j];
                }
            }
            acc
        };
        let mut g = [0.0; 3];
        jet.grad_pba(&p, &a, &mut g);
        let mut sm = [0.0; 9];
        jet.s_matrix(&p, &a, &mut sm);
        let h = 1e-5;
        for k in 0..3 {
            let mut yp = x;
            let mut ym = x;
            yp[k] += h;
            ym[k] -= h;
            assert!((g[k] - (pba(&yp) - pba(&ym)) / (2.0 * h)).abs() < 1e-8);
            let mut jp = s.new_jet();
            let mut jm = s.new_jet();
            s.eval_jet(&yp, 1, &mut jp);
            s.eval_jet(&ym, 1, &mut jm);
            let mut gp = [0.0; 3];
            let mut gm = [0.0; 3];
            jp.grad_pba(&p, &a, &mut gp);
            jm.grad_pba(&p, &a, &mut gm);
            for l in 0..3 {
                assert!((sm[l * 3 + k] - (gp[l] - gm[l]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn contraction_matrices_are_consistent() {
        let s = HTypeStructure::linear_growth_example().with_epsilon(0.1).unwrap();
        let mut jet = s.new_jet();
        let x = [0.5, -0.2, 0.9, 0.1];
        s.eval_jet(&x, 1, &mut jet);
        let p = [1.0, 2.0, -1.0, 0.5];
        let a = [0.3, -0.4, 0.8, 0.2];
        let mut q = vec![0.0; jet.cols() * 4];
        let mut pm = vec![0.0; 16];
        let mut g = [0.0; 4];
        jet.q_matrix(&p, &mut q);
        jet.p_matrix(&a, &mut pm);
        jet.grad_pba(&p, &a, &mut g);
        for k in 0..4 {
            let via_q: f64 = (0..jet.cols()).map(|j| a[j] * q[j * 4 + k]).sum();
            let via_p: f64 = (0..4).map(|l| p[l] * pm[l * 4 + k]).sum();
            assert!((via_q - g[k]).abs() < 1e-14);
            assert!((via_p - g[k]).abs() < 1e-14);
        }
    }
}
