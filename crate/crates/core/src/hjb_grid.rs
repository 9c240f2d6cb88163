//! Semi-Lagrangian dynamic programming for the value function on a box.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::MAX_DIM;
use crate::ocp::{value, OcpProblem, ValueOptions, CONTROL_BOUND_C2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// The box is `[-half_width, half_width]^n`.
    pub half_width: f64,
    /// Nodes per axis.
    pub resolution: usize,
    pub time_steps: usize,
    /// Control values per axis.
    pub control_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: 3.0,
            resolution: 61,
            time_steps: 20,
            control_points: 11,
        }
    }
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.resolution - 1) as f64
    }
}

/// Node values of `u` at every time level, with node-wise boundary contamination.
#[derive(Debug, Clone)]
pub struct GridValueFunction {
    grid: GridSpec,
    n: usize,
    horizon: f64,
    nodes: usize,
    values: Vec<f64>,
    contaminated: Vec<bool>,
    control_step: f64,
}

struct Lattice {
    n: usize,
    res: usize,
    lo: f64,
    dx: f64,
    strides: [usize; MAX_DIM],
}

impl Lattice {
    fn node(&self, mut idx: usize, x: &mut [f64]) {
        for d in 0..self.n {
            x[d] = self.lo + (idx % self.res) as f64 * self.dx;
            idx /= self.res;
        }
    }

    /// Trilinear interpolation of `level` without contamination bookkeeping.
    #[inline]
    fn value3(&self, level: &[f64], x: &[f64]) -> f64 {
        let top = (self.res - 1) as f64;
        let mut base = 0usize;
        let mut f = [0.0; 3];
        for d in 0..3 {
            let s = ((x[d] - self.lo) / self.dx).clamp(0.0, top);
            let i = (s as usize).min(self.res - 2);
            f[d] = s - i as f64;
            base += i * self.strides[d];
        }
        let (s1, s2) = (self.strides[1], self.strides[2]);
        let lerp = |a: f64, b: f64, w: f64| a + w * (b - a);
        let c00 = lerp(level[base], level[base + 1], f[0]);
        let c10 = lerp(level[base + s1], level[base + s1 + 1], f[0]);
        let c01 = lerp(level[base + s2], level[base + s2 + 1], f[0]);
        let c11 = lerp(level[base + s1 + s2], level[base + s1 + s2 + 1], f[0]);
        lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2])
    }

    /// Multilinear interpolation; returns `true` when `x` had to be clamped.
    fn interpolate(&self, level: &[f64], x: &[f64], flags: Option<&[bool]>) -> (f64, bool) {
        let n = self.n;
        let mut base = 0usize;
        let mut frac = [0.0; MAX_DIM];
        let mut clamped = false;
        for d in 0..n {
            let s = (x[d] - self.lo) / self.dx;
            let top = (self.res - 1) as f64;
            let sc = if s < 0.0 {
                clamped = true;
                0.0
            } else if s > top {
                clamped = true;
                top
            } else {
                s
            };
            let i = (sc.floor() as usize).min(self.res - 2);
            frac[d] = sc - i as f64;
            base += i * self.strides[d];
        }
        let mut v = 0.0;
        let mut dirty = false;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base;
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    idx += self.strides[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w == 0.0 {
                continue;
            }
            v += w * level[idx];
            if let Some(f) = flags {
                dirty |= f[idx];
            }
        }
        (v, clamped || dirty)
    }
}

fn control_grid(c: usize, points: usize) -> Vec<f64> {
    let total = points.pow(c as u32);
    let mut out = Vec::with_capacity(total * c);
    for mut k in 0..total {
        for _ in 0..c {
            let j = k % points;
            k /= points;
            out.push(if points == 1 { 0.0 } else { -1.0 + 2.0 * j as f64 / (points - 1) as f64 });
        }
    }
    out
}

/// Backward semi-Lagrangian scheme
/// `u(x, t_k) = min_a Δt (½|a|^{γ'} + f(x, t_k)) + I[u(·, t_{k+1})](x + Δt B(x) a)`
/// over a uniform control grid in the box of radius `C2 (1 + |x1| + |x2|)`.
pub fn solve_hjb(problem: &OcpProblem, grid: GridSpec) -> Result<GridValueFunction> {
    let n = problem.n();
    if grid.resolution < 2 || grid.time_steps == 0 || grid.control_points == 0 || !(grid.half_width > 0.0) {
        return Err(Error::invalid("grid", "need resolution ≥ 2, at least one step and one control"));
    }
    let nodes = grid
        .resolution
        .checked_pow(n as u32)
        .filter(|&v| v <= 50_000_000)
        .ok_or_else(|| Error::invalid("grid.resolution", "too many nodes"))?;
    let spec = problem.spec();
    let c = spec.control_dim();
    let lat = {
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1;
        for st in strides.iter_mut().take(n) {
            *st = s;
            s *= grid.resolution;
        }
        Lattice {
            n,
            res: grid.resolution,
            lo: -grid.half_width,
            dx: grid.dx(),
            strides,
        }
    };
    let unit = control_grid(c, grid.control_points);
    let levels = grid.time_steps + 1;
    let horizon = problem.horizon();
    let dt = horizon / grid.time_steps as f64;
    let mut values = vec![0.0; levels * nodes];
    let mut contaminated = vec![false; levels * nodes];
    {
        let last = &mut values[grid.time_steps * nodes..];
        last.par_iter_mut().enumerate().for_each(|(i, v)| {
            let mut x = [0.0; MAX_DIM];
            lat.node(i, &mut x);
            *v = problem.terminal().value(&x[..n], horizon);
        });
    }
    let unit_ball = spec.gamma_conjugate().is_infinite();
    // ½|a|^{γ'} is homogeneous of degree γ', so unit-grid costs rescale exactly
    let homogeneous = !unit_ball;
    let unit_cost: Vec<f64> = unit.chunks(c).map(|u| spec.control_cost(u)).collect();
    for k in (0..grid.time_steps).rev() {
        let t = k as f64 * dt;
        let (head, tail) = values.split_at_mut((k + 1) * nodes);
        let next = &tail[..nodes];
        let cur = &mut head[k * nodes..];
        let (fhead, ftail) = contaminated.split_at_mut((k + 1) * nodes);
        let next_flags = &ftail[..nodes];
        let cur_flags = &mut fhead[k * nodes..];
        cur.par_iter_mut().zip(cur_flags.par_iter_mut()).enumerate().for_each_init(
            || spec.structure().new_jet(),
            |jet, (i, (v, flag))| {
                let mut x = [0.0; MAX_DIM];
                lat.node(i, &mut x);
                let x = &x[..n];
                let mut radius = CONTROL_BOUND_C2 * (1.0 + x.iter().take(2).map(|a| a.abs()).sum::<f64>());
                if unit_ball {
                    radius = radius.min(1.0);
                }
                spec.structure().eval_jet(x, 0, jet);
                let b = jet.b();
                let running = dt * problem.running().value(x, t);
                let scale = dt * radius;
                let cost_scale = if homogeneous { radius.powf(spec.gamma_conjugate()) } else { 0.0 };
                let mut best = f64::INFINITY;
                let mut best_foot = [0.0; MAX_DIM];
                let mut a = [0.0; MAX_DIM];
                let mut foot = [0.0; MAX_DIM];
                for (u, &lu) in unit.chunks(c).zip(&unit_cost) {
                    let l = if homogeneous {
                        cost_scale * lu
                    } else {
                        for j in 0..c {
                            a[j] = radius * u[j];
                        }
                        spec.control_cost(&a[..c])
                    };
                    if !l.is_finite() {
                        continue;
                    }
                    for d in 0..n {
                        let row = &b[d * c..(d + 1) * c];
                        foot[d] = x[d] + scale * row.iter().zip(u).map(|(p, q)| p * q).sum::<f64>();
                    }
                    let w = if n == 3 { lat.value3(next, &foot[..3]) } else { lat.interpolate(next, &foot[..n], None).0 };
                    let total = dt * l + running + w;
                    if total < best {
                        best = total;
                        best_foot = foot;
                    }
                }
                let best_flag = lat.interpolate(next, &best_foot[..n], Some(next_flags)).1;
                *v = best;
                *flag = best_flag;
            },
        );
    }
    Ok(GridValueFunction {
        grid,
        n,
        horizon,
        nodes,
        values,
        contaminated,
        control_step: 2.0 * CONTROL_BOUND_C2 / (grid.control_points.max(2) - 1) as f64,
    })
}

impl GridValueFunction {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn level_time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.grid.time_steps as f64
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.values[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn node_position(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.lattice().node(i, &mut x);
        x
    }

    /// Control-grid spacing at the origin, `Δa`.
    pub fn control_step(&self) -> f64 {
        self.control_step
    }

    fn lattice(&self) -> Lattice {
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1;
        for st in strides.iter_mut().take(self.n) {
            *st = s;
            s *= self.grid.resolution;
        }
        Lattice {
            n: self.n,
            res: self.grid.resolution,
            lo: -self.grid.half_width,
            dx: self.grid.dx(),
            strides,
        }
    }

    /// Interpolated `u(x, t)` (linear in time between levels) and whether any
    /// contributing node is contaminated or `x` lies outside the box.
    pub fn interpolate(&self, x: &[f64], t: f64) -> (f64, bool) {
        let lat = self.lattice();
        let s = (t / self.horizon * self.grid.time_steps as f64).clamp(0.0, self.grid.time_steps as f64);
        let k = (s.floor() as usize).min(self.grid.time_steps - 1);
        let w = s - k as f64;
        let flags = |l: usize| &self.contaminated[l * self.nodes..(l + 1) * self.nodes];
        let (a, fa) = lat.interpolate(self.level(k), x, Some(flags(k)));
        if w == 0.0 {
            return (a, fa);
        }
        let (b, fb) = lat.interpolate(self.level(k + 1), x, Some(flags(k + 1)));
        ((1.0 - w) * a + w * b, fa || fb)
    }

    pub fn is_contaminated(&self, node: usize, level: usize) -> bool {
        self.contaminated[level * self.nodes + node]
    }

    pub fn contaminated_fraction(&self, level: usize) -> f64 {
        let f = &self.contaminated[level * self.nodes..(level + 1) * self.nodes];
        f.iter().filter(|&&b| b).count() as f64 / self.nodes as f64
    }

    /// `(x1, x2, u)` on the plane `x3 = x3` (or the first two axes in other
    /// dimensions, remaining coordinates fixed at `rest`) at level `k`.
    pub fn slice(&self, k: usize, rest: &[f64]) -> Vec<[f64; 3]> {
        let r = self.grid.resolution;
        let dx = self.grid.dx();
        let lo = -self.grid.half_width;
        let t = self.level_time(k);
        let mut out = Vec::with_capacity(r * r);
        let mut x = vec![0.0; self.n];
        for j in 0..r {
            for i in 0..r {
                x[0] = lo + i as f64 * dx;
                if self.n > 1 {
                    x[1] = lo + j as f64 * dx;
                }
                for d in 2..self.n {
                    x[d] = rest.get(d - 2).copied().unwrap_or(0.0);
                }
                out.push([x[0], if self.n > 1 { x[1] } else { 0.0 }, self.interpolate(&x, t).0]);
            }
            if self.n == 1 {
                break;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridComparison {
    pub max_error: f64,
    pub probes: usize,
    pub contaminated_probes: usize,
    pub dx: f64,
    pub da: f64,
    pub time_steps: usize,
}

/// `max |I[u_grid](x, t) - value(x, t)|` over probes in the uncontaminated region.
pub fn compare_with_ocp(gvf: &GridValueFunction, problem: &OcpProblem, probes: &[(Vec<f64>, f64)], opts: &ValueOptions) -> Result<GridComparison> {
    let mut max_error = 0.0f64;
    let mut contaminated_probes = 0;
    for (x, t) in probes {
        let (g, dirty) = gvf.interpolate(x, *t);
        if dirty {
            contaminated_probes += 1;
            continue;
        }
        let v = value(problem, x, *t, opts)?.value;
        max_error = max_error.max((g - v).abs());
    }
    Ok(GridComparison {
        max_error,
        probes: probes.len(),
        contaminated_probes,
        dx: gvf.grid.dx(),
        da: gvf.control_step(),
        time_steps: gvf.grid.time_steps,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::couplings::{CostField, ExplicitFunction};
    use crate::geometry::HTypeStructure;
    use crate::hamiltonian::HamiltonianSpec;

    fn problem(f: ExplicitFunction, g: ExplicitFunction) -> OcpProblem {
        let f: Arc<dyn CostField> = Arc::new(f);
        let g: Arc<dyn CostField> = Arc::new(g);
        OcpProblem::new(HamiltonianSpec::quadratic(HTypeStructure::heisenberg()), f, g, 1.0, 200).unwrap()
    }

    const SMALL: GridSpec = GridSpec {
        half_width: 2.0,
        resolution: 9,
        time_steps: 4,
        control_points: 5,
    };

    #[test]
    fn zero_and_constant_costs() {
        let z = solve_hjb(&problem(ExplicitFunction::Zero, ExplicitFunction::Zero), SMALL).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let one = solve_hjb(&problem(ExplicitFunction::Constant { value: 1.0 }, ExplicitFunction::Zero), SMALL).unwrap();
        for k in 0..=4 {
            let t = one.level_time(k);
            assert!(one.level(k).iter().all(|&v| (v - (1.0 - t)).abs() < 1e-15));
        }
        let r = compare_with_ocp(&z, &problem(ExplicitFunction::Zero, ExplicitFunction::Zero), &[], &ValueOptions::pmp_only()).unwrap();
        assert_eq!(r.max_error, 0.0);
    }

    #[test]
    fn terminal_level_is_exact() {
        let g = ExplicitFunction::Gaussian { center: vec![0.0; 3], width: 1.0, height: 1.0 };
        let u = solve_hjb(&problem(ExplicitFunction::Zero, g.clone()), SMALL).unwrap();
        for i in 0..u.node_count() {
            assert_eq!(u.level(4)[i], g.value(&u.node_position(i), 1.0));
        }
    }

    #[test]
    fn scheme_is_monotone_in_data() {
        let g1 = ExplicitFunction::Gaussian { center: vec![0.0; 3], width: 1.0, height: -1.0 };
        let g2 = ExplicitFunction::Sum { terms: vec![g1.clone(), ExplicitFunction::Gaussian { center: vec![0.5, 0.0, 0.0], width: 0.5, height: 0.3 }] };
        let u1 = solve_hjb(&problem(ExplicitFunction::Zero, g1), SMALL).unwrap();
        let u2 = solve_hjb(&problem(ExplicitFunction::Zero, g2), SMALL).unwrap();
        assert!(u1.values.iter().zip(&u2.values).all(|(a, b)| a <= b));
        let c1 = solve_hjb(&problem(ExplicitFunction::Constant { value: 0.2 }, ExplicitFunction::Zero), SMALL).unwrap();
        let c2 = solve_hjb(&problem(ExplicitFunction::Constant { value: 0.7 }, ExplicitFunction::Zero), SMALL).unwrap();
        assert!(c1.values.iter().zip(&c2.values).all(|(a, b)| a <= b));
    }
}
