//! Hamiltonians `|p B(x)|^γ`, their drifts and the matching control costs.
//!
//! Two normalizations live here. [`HamiltonianSpec::hamiltonian`] and
//! [`HamiltonianSpec::drift`] follow the displayed formulas: `½|pB|²` for γ = 2 and
//! `|pB|^γ` for γ < 2. The optimal-control code works with the Legendre conjugate
//! of the running cost `½|a|^{γ'}`, namely `c_γ |pB|^γ` with
//! `c_γ = (2/γ')^{γ-1} / γ`, which coincides with `½|pB|²` at γ = 2.

use crate::error::{Error, Result};
use crate::geometry::{HTypeStructure, Jet, MAX_DIM};

/// `|pB| ≤ SINGULAR_TOL` is treated as the singular set of the γ < 2 drift.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    structure: HTypeStructure,
    gamma: f64,
    gamma_conjugate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub velocity: Vec<f64>,
    /// Set when γ < 2 and `|pB|` fell below [`SINGULAR_TOL`]; the velocity is then zero.
    pub singular: bool,
}

impl HamiltonianSpec {
    pub fn quadratic(structure: HTypeStructure) -> Self {
        Self {
            structure,
            gamma: 2.0,
            gamma_conjugate: 2.0,
        }
    }

    /// `γ ∈ [1, 2]`; γ = 1 gives `γ' = ∞`.
    pub fn power(structure: HTypeStructure, gamma: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&gamma) {
            return Err(Error::invalid("gamma", "must lie in [1, 2]"));
        }
        let gamma_conjugate = if gamma == 1.0 {
            f64::INFINITY
        } else {
            gamma / (gamma - 1.0)
        };
        Ok(Self {
            structure,
            gamma,
            gamma_conjugate,
        })
    }

    pub fn structure(&self) -> &HTypeStructure {
        &self.structure
    }

    pub fn with_structure(&self, structure: HTypeStructure) -> Self {
        Self {
            structure,
            ..self.clone()
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_conjugate(&self) -> f64 {
        self.gamma_conjugate
    }

    pub fn is_quadratic(&self) -> bool {
        self.gamma == 2.0
    }

    pub fn n(&self) -> usize {
        self.structure.n()
    }

    pub fn control_dim(&self) -> usize {
        self.structure.control_dim()
    }

    fn q_of(&self, x: &[f64], p: &[f64], jet: &mut Jet, q: &mut [f64]) -> Result<()> {
        Error::check_dim(self.n(), x.len())?;
        Error::check_dim(self.n(), p.len())?;
        self.structure.eval_jet(x, 0, jet);
        jet.row_times_b(p, q);
        Ok(())
    }

    pub fn hamiltonian(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        let mut jet = self.structure.new_jet();
        let mut q = [0.0; MAX_DIM];
        self.q_of(x, p, &mut jet, &mut q)?;
        let q2 = norm2(&q[..jet.cols()]);
        Ok(if self.is_quadratic() {
            0.5 * q2
        } else {
            q2.sqrt().powf(self.gamma)
        })
    }

    /// `∂_p` of [`HamiltonianSpec::hamiltonian`].
    pub fn drift(&self, x: &[f64], p: &[f64]) -> Result<Drift> {
        let mut jet = self.structure.new_jet();
        let mut q = [0.0; MAX_DIM];
        self.q_of(x, p, &mut jet, &mut q)?;
        let cols = jet.cols();
        let mut velocity = vec![0.0; self.n()];
        jet.b_times(&q[..cols], &mut velocity);
        if self.is_quadratic() {
            return Ok(Drift {
                velocity,
                singular: false,
            });
        }
        let r = norm2(&q[..cols]).sqrt();
        if r <= SINGULAR_TOL {
            velocity.fill(0.0);
            return Ok(Drift {
                velocity,
                singular: true,
            });
        }
        let k = self.gamma * r.powf(self.gamma - 2.0);
        velocity.iter_mut().for_each(|v| *v *= k);
        Ok(Drift {
            velocity,
            singular: false,
        })
    }

    /// `½|a|^{γ'}`; for γ = 1 the convex indicator of the closed unit ball.
    pub fn control_cost(&self, a: &[f64]) -> f64 {
        let r2 = norm2(a);
        if self.gamma_conjugate == 2.0 {
            return 0.5 * r2;
        }
        let r = r2.sqrt();
        if self.gamma_conjugate.is_infinite() {
            if r <= 1.0 + 1e-9 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            0.5 * r.powf(self.gamma_conjugate)
        }
    }

    /// `c_γ` such that `sup_a [q·a - ½|a|^{γ'}] = c_γ |q|^γ`.
    pub fn conjugate_scale(&self) -> f64 {
        if self.is_quadratic() {
            return 0.5;
        }
        (2.0 / self.gamma_conjugate).powf(self.gamma - 1.0) / self.gamma
    }

    /// `c_γ |q|^γ`.
    pub fn control_hamiltonian(&self, q: &[f64]) -> f64 {
        let q2 = norm2(q);
        if self.is_quadratic() {
            0.5 * q2
        } else {
            self.conjugate_scale() * q2.sqrt().powf(self.gamma)
        }
    }

    /// The maximizer `a*(q)` of `q·a - ½|a|^{γ'}`, i.e. `∇(c_γ |q|^γ)`. Returns `true`
    /// when `q` is in the singular set (γ < 2, `a` set to zero).
    pub fn optimal_control(&self, q: &[f64], a: &mut [f64]) -> bool {
        let k = match self.control_gain(q) {
            Some(k) => k,
            None => {
                a[..q.len()].fill(0.0);
                return true;
            }
        };
        for (ai, qi) in a.iter_mut().zip(q) {
            *ai = k * qi;
        }
        false
    }

    fn control_gain(&self, q: &[f64]) -> Option<f64> {
        if self.is_quadratic() {
            return Some(1.0);
        }
        let r = norm2(q).sqrt();
        if r <= SINGULAR_TOL {
            return None;
        }
        Some((2.0 / self.gamma_conjugate).powf(self.gamma - 1.0) * r.powf(self.gamma - 2.0))
    }

    /// Jacobian `∂a*/∂q` (row-major `k × k`, `k = q.len()`); zero on the singular set.
    pub fn optimal_control_jacobian(&self, q: &[f64], out: &mut [f64]) {
        let k = q.len();
        out[..k * k].fill(0.0);
        let gain = match self.control_gain(q) {
            Some(g) => g,
            None => return,
        };
        let r2 = norm2(q);
        let t = if self.is_quadratic() { 0.0 } else { (self.gamma - 2.0) / r2 };
        for i in 0..k {
            for j in 0..k {
                let id = if i == j { 1.0 } else { 0.0 };
                out[i * k + j] = gain * (id + t * q[i] * q[j]);
            }
        }
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heis(eps: f64) -> HamiltonianSpec {
        HamiltonianSpec::quadratic(HTypeStructure::heisenberg().with_epsilon(eps).unwrap())
    }

    #[test]
    fn hamiltonian_examples() {
        let h = heis(0.0);
        assert_eq!(h.hamiltonian(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(h.hamiltonian(&[0.0; 3], &[0.6, -1.2, 9.0]).unwrap(), 0.5 * (0.36 + 1.44));
        let g1 = HamiltonianSpec::power(HTypeStructure::heisenberg(), 1.0).unwrap();
        assert_eq!(g1.hamiltonian(&[0.0; 3], &[3.0, 4.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn drift_examples() {
        let d = heis(0.0).drift(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(d.velocity, vec![-1.0, 1.0, 3.0]);
        let d = heis(0.5).drift(&[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(d.velocity, vec![-1.0, 1.0, 3.25]);
        let d = heis(0.0).drift(&[4.0, -1.0, 2.0], &[0.0; 3]).unwrap();
        assert_eq!(d.velocity, vec![0.0; 3]);
    }

    #[test]
    fn singular_drift_is_flagged() {
        let h = HamiltonianSpec::power(HTypeStructure::heisenberg(), 1.5).unwrap();
        let d = h.drift(&[1.0, 2.0, 3.0], &[2.0, -1.0, 1.0]).unwrap();
        assert!(d.singular);
        assert_eq!(d.velocity, vec![0.0; 3]);
    }

    #[test]
    fn control_cost_examples() {
        let h = heis(0.0);
        assert_eq!(h.control_cost(&[3.0, 4.0]), 12.5);
        assert_eq!(h.control_cost(&[0.0, 0.0]), 0.0);
        let g = HamiltonianSpec::power(HTypeStructure::heisenberg(), 1.5).unwrap();
        assert_eq!(g.gamma_conjugate(), 3.0);
        assert_eq!(g.control_cost(&[1.0, 0.0]), 0.5);
        let g1 = HamiltonianSpec::power(HTypeStructure::heisenberg(), 1.0).unwrap();
        assert_eq!(g1.control_cost(&[0.6, 0.8]), 0.0);
        assert!(g1.control_cost(&[0.6, 0.9]).is_infinite());
    }

    #[test]
    fn rejects_gamma_out_of_range() {
        assert!(HamiltonianSpec::power(HTypeStructure::heisenberg(), 2.5).is_err());
        assert!(HamiltonianSpec::power(HTypeStructure::heisenberg(), 0.9).is_err());
    }

    #[test]
    fn legendre_identity_on_control_grid() {
        let h = heis(0.0);
        let x = [0.4, -0.9, 0.2];
        let p = [0.3, 0.5, -0.7];
        let b = h.structure().matrix_b(&x).unwrap();
        let mut best = f64::NEG_INFINITY;
        let step = 2e-3;
        for i in -500..=500 {
            for j in -500..=500 {
                let a = [i as f64 * step, j as f64 * step];
                let pba: f64 = (0..3).map(|r| p[r] * (b[(r, 0)] * a[0] + b[(r, 1)] * a[1])).sum();
                best = best.max(-pba - h.control_cost(&a));
            }
        }
        let exact = h.hamiltonian(&x, &p).unwrap();
        assert!((best - exact).abs() < step * step, "{best} vs {exact}");
    }

    #[test]
    fn conjugate_pair_matches_quadratic_at_two() {
        let h = heis(0.3);
        let q = [0.7, -1.3, 0.4];
        let k = h.conjugate_scale() * norm2(&q).sqrt().powf(2.0);
        assert!((k - h.control_hamiltonian(&q)).abs() <= 1e-15 * k);
    }

    #[test]
    fn optimal_control_maximizes_for_fractional_gamma() {
        let h = HamiltonianSpec::power(HTypeStructure::heisenberg(), 1.5).unwrap();
        let q = [0.8, -0.3];
        let mut a = [0.0; 2];
        h.optimal_control(&q, &mut a);
        let obj = |a: &[f64; 2]| q[0] * a[0] + q[1] * a[1] - h.control_cost(a);
        let best = obj(&a);
        assert!((best - h.control_hamiltonian(&q)).abs() < 1e-14);
        for k in 0..64 {
            let th = k as f64 * std::f64::consts::TAU / 64.0;
            let b = [a[0] + 1e-3 * th.cos(), a[1] + 1e-3 * th.sin()];
            assert!(obj(&b) <= best);
        }
    }

    #[test]
    fn optimal_control_jacobian_matches_differences() {
        for &gamma in &[2.0, 1.5, 1.0] {
            let h = HamiltonianSpec::power(HTypeStructure::heisenberg(), gamma).unwrap();
            let q = [0.8, -0.3];
            let mut jac = [0.0; 4];
            h.optimal_control_jacobian(&q, &mut jac);
            let step = 1e-6;
            for j in 0..2 {
                let mut qp = q;
                let mut qm = q;
                qp[j] += step;
                qm[j] -= step;
                let mut ap = [0.0; 2];
                let mut am = [0.0; 2];
                h.optimal_control(&qp, &mut ap);
                h.optimal_control(&qm, &mut am);
                for i in 0..2 {
                    assert!((jac[i * 2 + j] - (ap[i] - am[i]) / (2.0 * step)).abs() < 1e-8);
                }
            }
        }
    }
}
