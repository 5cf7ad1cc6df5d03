// SPDX-License-Identifier: Apache-2.0

//! W-capacity of annuli in 2D polar charts by energy minimization over
//! bilinear elements.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{polar_pullback_2d, ChartManifold, ConductivityField, Pole, ADAPT_TOL};
use crate::par::{self, Exec};
use crate::tensor::{self, MetricAtPoint, MixedTensorAtPoint};

/// Default relative residual of the conjugate gradient solve.
pub const SOLVER_TOL: f64 = 1e-10;
/// Smallest admissible grid resolution per axis.
pub const MIN_RESOLUTION: usize = 8;

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub exec: Exec,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { exec: Exec::default(), tol: SOLVER_TOL, max_iter: 200_000 }
    }
}

/// Nodal solution on the polar grid r_i = ρ + i·Δr (i = 0..=n_r),
/// θ_j = 2πj/n_θ (j = 0..n_θ, periodic). Index (i, j) ↦ i·n_θ + j.
#[derive(Clone, Debug)]
pub struct AnnulusGrid {
    pub rho: f64,
    pub big_r: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub u: Vec<f64>,
    /// ∫⟨W∇u,∇u⟩ dV of the discrete solution.
    pub energy: f64,
    /// Inner-ring flux from one-sided radial differences.
    pub flux: f64,
    /// Σ (Ku) over the inner ring, equal to the energy at convergence.
    pub inner_consistent_flux: f64,
    /// −Σ (Ku) over the outer ring.
    pub outer_consistent_flux: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl AnnulusGrid {
    pub fn dr(&self) -> f64 {
        (self.big_r - self.rho) / self.n_r as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.n_theta + j % self.n_theta]
    }

    /// Bilinear interpolation; θ is taken modulo 2π, r is clamped.
    pub fn sample(&self, r: f64, theta: f64) -> f64 {
        let s = ((r - self.rho) / self.dr()).clamp(0.0, self.n_r as f64);
        let i = (s.floor() as usize).min(self.n_r - 1);
        let fs = s - i as f64;
        let t = theta.rem_euclid(2.0 * PI) / self.dtheta();
        let j = (t.floor() as usize) % self.n_theta;
        let ft = t - t.floor();
        let a = self.at(i, j) * (1.0 - ft) + self.at(i, j + 1) * ft;
        let b = self.at(i + 1, j) * (1.0 - ft) + self.at(i + 1, j + 1) * ft;
        a * (1.0 - fs) + b * fs
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Writes `r,theta,u` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "r,theta,u")?;
        for i in 0..=self.n_r {
            let r = self.rho + i as f64 * self.dr();
            for j in 0..self.n_theta {
                writeln!(out, "{},{},{}", r, j as f64 * self.dtheta(), self.at(i, j))?;
            }
        }
        Ok(())
    }
}

/// A 2D polar chart and conductivity ready for the grid solver.
fn polar_problem(m: &ChartManifold, w: &ConductivityField) -> Result<(ChartManifold, ConductivityField)> {
    if m.dim() != 2 || w.dim() != 2 {
        return Err(Error::DimensionMismatch { left: m.dim(), right: 2 });
    }
    match m.pole() {
        Some(Pole::Polar) => Ok((m.clone(), w.clone())),
        Some(Pole::Cartesian { .. }) => polar_pullback_2d(m, w),
        None => Err(Error::MissingPole),
    }
}

fn check_adapted(g: &MetricAtPoint, x: &[f64]) -> Result<()> {
    let gm = g.matrix();
    let defect = (gm[(0, 0)] - 1.0).abs().max(gm[(0, 1)].abs());
    if defect > ADAPT_TOL {
        return Err(Error::NotPolarAdapted { point: x.to_vec(), defect });
    }
    Ok(())
}

/// Flux coefficient A = W g⁻¹ √det g at a chart point, so that the energy
/// density in coordinates is dφᵀ A dφ.
fn flux_coefficient(m: &ChartManifold, w: &ConductivityField, x: &[f64]) -> Result<[f64; 3]> {
    let g = m.metric_at(x)?;
    check_adapted(&g, x)?;
    let wm = MixedTensorAtPoint::new(w.at(x)?)?;
    tensor::validate_conductivity(&wm, &g, tensor::SA_TOL)?;
    let a: DMatrix<f64> = wm.matrix() * g.inverse() * g.matrix().determinant().sqrt();
    Ok([a[(0, 0)], 0.5 * (a[(0, 1)] + a[(1, 0)]), a[(1, 1)]])
}

/// Element stiffness (4×4, nodes (0,0), (1,0), (0,1), (1,1) in local (s, t)).
fn element_matrix(coef: &[[f64; 3]; 4], dr: f64, dt: f64) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    let mut q = 0;
    for &s in &GAUSS {
        for &t in &GAUSS {
            let [arr, art, att] = coef[q];
            q += 1;
            let gr = [-(1.0 - t) / dr, (1.0 - t) / dr, -t / dr, t / dr];
            let gt = [-(1.0 - s) / dt, -s / dt, (1.0 - s) / dt, s / dt];
            let wq = 0.25 * dr * dt;
            for a in 0..4 {
                for b in 0..4 {
                    k[a][b] += wq * (arr * gr[a] * gr[b] + art * (gr[a] * gt[b] + gt[a] * gr[b]) + att * gt[a] * gt[b]);
                }
            }
        }
    }
    k
}

/// Assembled operator as a 9-point stencil per node.
struct Stencil {
    n_r: usize,
    n_t: usize,
    /// coefficients indexed [node][(di+1)*3 + (dj+1)]
    c: Vec<[f64; 9]>,
}

impl Stencil {
    fn assemble(m: &ChartManifold, w: &ConductivityField, rho: f64, big_r: f64, n_r: usize, n_t: usize, exec: Exec) -> Result<Stencil> {
        let dr = (big_r - rho) / n_r as f64;
        let dt = 2.0 * PI / n_t as f64;
        let elems: Vec<Result<[[f64; 4]; 4]>> = par::map(exec, n_r * n_t, |e| {
            let (i, j) = (e / n_t, e % n_t);
            let mut coef = [[0.0; 3]; 4];
            let mut q = 0;
            for &s in &GAUSS {
                for &t in &GAUSS {
                    let x = [rho + (i as f64 + s) * dr, (j as f64 + t) * dt];
                    coef[q] = flux_coefficient(m, w, &x)?;
                    q += 1;
                }
            }
            Ok(element_matrix(&coef, dr, dt))
        });
        let elems: Vec<[[f64; 4]; 4]> = elems.into_iter().collect::<Result<_>>()?;
        // local node a sits at offset (a & 1, a >> 1) in (i, j) from the element corner
        let c = par::map(exec, (n_r + 1) * n_t, |node| {
            let (i, j) = (node / n_t, node % n_t);
            let mut st = [0.0; 9];
            for (ei, a_di) in [(i.wrapping_sub(1), 1usize), (i, 0)] {
                if ei >= n_r {
                    continue;
                }
                for (ej, a_dj) in [((j + n_t - 1) % n_t, 1usize), (j, 0)] {
                    let k = &elems[ei * n_t + ej];
                    let a = a_di | (a_dj << 1);
                    for b in 0..4 {
                        let di = (b & 1) as isize - a_di as isize;
                        let dj = (b >> 1) as isize - a_dj as isize;
                        st[((di + 1) * 3 + dj + 1) as usize] += k[a][b];
                    }
                }
            }
            st
        });
        Ok(Stencil { n_r, n_t, c })
    }

    /// (Kx) at node, reading the full nodal vector.
    fn apply_at(&self, x: &[f64], node: usize) -> f64 {
        let n_t = self.n_t;
        let (i, j) = (node / n_t, node % n_t);
        let st = &self.c[node];
        let mut s = 0.0;
        for di in -1isize..=1 {
            let ii = i as isize + di;
            if ii < 0 || ii > self.n_r as isize {
                continue;
            }
            let row = ii as usize * n_t;
            for dj in -1isize..=1 {
                let jj = (j as isize + dj).rem_euclid(n_t as isize) as usize;
                s += st[((di + 1) * 3 + dj + 1) as usize] * x[row + jj];
            }
        }
        s
    }

    fn diag(&self, node: usize) -> f64 {
        self.c[node][4]
    }
}

/// Solves Δ_W u = 0 on ρ < r < R with u(ρ) = 1, u(R) = 0.
pub fn solve_dirichlet(m: &ChartManifold, w: &ConductivityField, rho: f64, big_r: f64, n_r: usize, n_theta: usize) -> Result<AnnulusGrid> {
    solve_dirichlet_with(m, w, rho, big_r, n_r, n_theta, &SolverOptions::default(), None)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_dirichlet_with(
    m: &ChartManifold,
    w: &ConductivityField,
    rho: f64,
    big_r: f64,
    n_r: usize,
    n_theta: usize,
    opts: &SolverOptions,
    warm: Option<&AnnulusGrid>,
) -> Result<AnnulusGrid> {
    if n_r < MIN_RESOLUTION || n_theta < MIN_RESOLUTION {
        return Err(Error::InvalidParameter(format!("grid {n_r}x{n_theta} below minimum {MIN_RESOLUTION}")));
    }
    if !(rho > 0.0 && big_r > rho) {
        return Err(Error::InvalidParameter(format!("need 0 < rho < R, got {rho}, {big_r}")));
    }
    let floor = 10.0 * crate::fd::step_at(m.step(), rho);
    if rho < floor {
        return Err(Error::RadiusTooSmall { r: rho, floor });
    }
    let (pm, pw) = polar_problem(m, w)?;
    let exec = opts.exec;
    let st = Stencil::assemble(&pm, &pw, rho, big_r, n_r, n_theta, exec)?;
    let n_t = n_theta;
    let total = (n_r + 1) * n_t;
    let dr = (big_r - rho) / n_r as f64;
    let dt = 2.0 * PI / n_t as f64;
    let is_interior = |node: usize| node >= n_t && node < n_r * n_t;

    // boundary data and right-hand side b = −K u_B on interior nodes
    let mut ub = vec![0.0; total];
    ub[..n_t].iter_mut().for_each(|v| *v = 1.0);
    let b = par::map(exec, total, |k| if is_interior(k) { -st.apply_at(&ub, k) } else { 0.0 });

    let mut x = par::map(exec, total, |k| {
        if !is_interior(k) {
            return 0.0;
        }
        let (i, j) = (k / n_t, k % n_t);
        let r = rho + i as f64 * dr;
        match warm {
            Some(g) => g.sample(r, j as f64 * dt),
            None => (big_r / r).ln() / (big_r / rho).ln(),
        }
    });
    let matvec = |v: &[f64]| par::map(exec, total, |k| if is_interior(k) { st.apply_at(v, k) } else { 0.0 });
    let precond = |v: &[f64]| par::map(exec, total, |k| if is_interior(k) { v[k] / st.diag(k) } else { 0.0 });

    let bnorm = par::dot(exec, &b, &b).sqrt();
    let ax = matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = par::dot(exec, &r, &z);
    let energy_fn = |x: &[f64], r: &[f64]| -0.5 * sum_pair(exec, x, &b, r);
    let mut j_prev = energy_fn(&x, &r);
    let mut it = 0;
    let mut rel = if bnorm > 0.0 { par::dot(exec, &r, &r).sqrt() / bnorm } else { 0.0 };
    while rel > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::SolverDiverged(format!("no convergence after {it} iterations (residual {rel:.3e})")));
        }
        let ap = matvec(&p);
        let pap = par::dot(exec, &p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverDiverged(format!("non-positive curvature pᵀKp = {pap:.3e}")));
        }
        let alpha = rz / pap;
        x = par::map(exec, total, |k| x[k] + alpha * p[k]);
        r = par::map(exec, total, |k| r[k] - alpha * ap[k]);
        let jn = energy_fn(&x, &r);
        if !jn.is_finite() || jn > j_prev + 1e-10 * j_prev.abs() {
            return Err(Error::SolverDiverged(format!("energy increased from {j_prev:.6e} to {jn:.6e}")));
        }
        j_prev = jn;
        z = precond(&r);
        let rz_new = par::dot(exec, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = par::map(exec, total, |k| z[k] + beta * p[k]);
        rel = par::dot(exec, &r, &r).sqrt() / bnorm;
        it += 1;
    }

    let mut u = x;
    u[..n_t].iter_mut().for_each(|v| *v = 1.0);
    let ku = par::map(exec, total, |k| st.apply_at(&u, k));
    let energy = par::dot(exec, &u, &ku);
    let inner_consistent_flux: f64 = ku[..n_t].iter().sum();
    let outer_consistent_flux: f64 = -ku[n_r * n_t..].iter().sum::<f64>();
    let flux = inner_flux(&pm, &pw, &u, rho, dr, n_t)?;
    Ok(AnnulusGrid {
        rho,
        big_r,
        n_r,
        n_theta,
        u,
        energy,
        flux,
        inner_consistent_flux,
        outer_consistent_flux,
        iterations: it,
        relative_residual: rel,
    })
}

fn sum_pair(exec: Exec, x: &[f64], b: &[f64], r: &[f64]) -> f64 {
    par::sum_blocks(exec, x.len(), |rg| rg.map(|k| x[k] * (b[k] + r[k])).sum())
}

/// −∫ (A du)_r dθ at r = ρ with a one-sided second-order radial difference.
fn inner_flux(m: &ChartManifold, w: &ConductivityField, u: &[f64], rho: f64, dr: f64, n_t: usize) -> Result<f64> {
    let dt = 2.0 * PI / n_t as f64;
    let mut s = 0.0;
    for j in 0..n_t {
        let ur = (-3.0 * u[j] + 4.0 * u[n_t + j] - u[2 * n_t + j]) / (2.0 * dr);
        let [arr, _, _] = flux_coefficient(m, w, &[rho, j as f64 * dt])?;
        // u is constant along the inner ring, so only A_rr contributes
        s -= arr * ur;
    }
    Ok(s * dt)
}

/// Capacity from a ladder of grids with Richardson extrapolation.
#[derive(Clone, Debug, Serialize)]
pub struct CapacityEstimate {
    pub energy_value: f64,
    pub flux_value: f64,
    pub richardson_extrapolate: f64,
    /// |extrapolate − finest energy|.
    pub error_bar: f64,
    /// Observed convergence order, when three levels were available.
    pub order: Option<f64>,
    pub ladder: Vec<LadderRung>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LadderRung {
    pub n_r: usize,
    pub n_theta: usize,
    pub energy: f64,
    pub flux: f64,
    pub iterations: usize,
}

/// Doubling ladder starting at `n0`×`n0`.
pub fn doubling_ladder(n0: usize, levels: usize) -> Vec<(usize, usize)> {
    (0..levels).map(|k| (n0 << k, n0 << k)).collect()
}

pub fn capacity(m: &ChartManifold, w: &ConductivityField, rho: f64, big_r: f64, ladder: &[(usize, usize)]) -> Result<CapacityEstimate> {
    capacity_with(m, w, rho, big_r, ladder, &SolverOptions::default())
}

pub fn capacity_with(
    m: &ChartManifold,
    w: &ConductivityField,
    rho: f64,
    big_r: f64,
    ladder: &[(usize, usize)],
    opts: &SolverOptions,
) -> Result<CapacityEstimate> {
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("empty resolution ladder".into()));
    }
    let mut rungs = Vec::with_capacity(ladder.len());
    let mut prev: Option<AnnulusGrid> = None;
    for &(nr, nt) in ladder {
        let g = solve_dirichlet_with(m, w, rho, big_r, nr, nt, opts, prev.as_ref())?;
        rungs.push(LadderRung { n_r: nr, n_theta: nt, energy: g.energy, flux: g.flux, iterations: g.iterations });
        prev = Some(g);
    }
    let e: Vec<f64> = rungs.iter().map(|r| r.energy).collect();
    let last = *e.last().expect("nonempty");
    let (extrap, order) = match e.len() {
        1 => (last, None),
        2 => (last + (last - e[0]) / 3.0, None),
        k => {
            let (e1, e2, e3) = (e[k - 3], e[k - 2], e[k - 1]);
            let p = ((e1 - e2) / (e2 - e3)).log2();
            let p_used = if p.is_finite() && (0.5..=6.0).contains(&p) { p } else { 2.0 };
            (e3 + (e3 - e2) / (2f64.powf(p_used) - 1.0), p.is_finite().then_some(p))
        }
    };
    let finest = rungs.last().expect("nonempty");
    Ok(CapacityEstimate {
        energy_value: finest.energy,
        flux_value: finest.flux,
        richardson_extrapolate: extrap,
        error_bar: (extrap - last).abs(),
        order,
        ladder: rungs,
    })
}

/// Vol_W(∂B_R) = ∫_{r=R} ⟨W∇r,∇r⟩ dμ by the periodic trapezoid rule.
pub fn vol_w_sphere(m: &ChartManifold, w: &ConductivityField, big_r: f64, n_theta: usize) -> Result<f64> {
    let (pm, pw) = polar_problem(m, w)?;
    let dt = 2.0 * PI / n_theta as f64;
    let mut s = 0.0;
    for j in 0..n_theta {
        let x = [big_r, j as f64 * dt];
        let nr = pm.grad_r(&x)?;
        let g = pm.metric_at(&x)?;
        let wnr = pw.mixed_at(&x)?.apply(&nr);
        s += g.inner(&wnr, &nr) * g.matrix()[(1, 1)].sqrt();
    }
    Ok(s * dt)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatioBounds {
    /// Smallest sampled eigenvalue of W.
    pub lower: f64,
    /// Largest sampled eigenvalue of W.
    pub upper: f64,
    /// Cap_W / Cap on the same grid.
    pub ratio: f64,
}

/// Eigenvalue sandwich for Cap_W / Cap, sampled at the quadrature points of
/// the `n_r`×`n_theta` grid.
pub fn capacity_ratio_bounds(
    m: &ChartManifold,
    w: &ConductivityField,
    rho: f64,
    big_r: f64,
    n_r: usize,
    n_theta: usize,
) -> Result<RatioBounds> {
    let (pm, pw) = polar_problem(m, w)?;
    let exec = Exec::default();
    let dr = (big_r - rho) / n_r as f64;
    let dt = 2.0 * PI / n_theta as f64;
    let spectra = par::map(exec, n_r * n_theta, |e| -> Result<(f64, f64)> {
        let (i, j) = (e / n_theta, e % n_theta);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &GAUSS {
            for &t in &GAUSS {
                let x = [rho + (i as f64 + s) * dr, (j as f64 + t) * dt];
                let sp = tensor::eigen_stats(&pw.mixed_at(&x)?, &pm.metric_at(&x)?)?;
                lo = lo.min(sp.mu());
                hi = hi.max(sp.kappa());
            }
        }
        Ok((lo, hi))
    });
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for s in spectra {
        let (lo, hi) = s?;
        lower = lower.min(lo);
        upper = upper.max(hi);
    }
    let cw = solve_dirichlet(&pm, &pw, rho, big_r, n_r, n_theta)?.energy;
    let c1 = solve_dirichlet(&pm, &ConductivityField::identity(2), rho, big_r, n_r, n_theta)?.energy;
    let ratio = cw / c1;
    let slack = 1e-8 * upper;
    if ratio < lower - slack || ratio > upper + slack {
        return Err(Error::SandwichViolated { ratio, lower, upper });
    }
    Ok(RatioBounds { lower, upper, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{radial_solution, WarpedModel};
    use crate::profile::Profile;

    fn plane() -> ChartManifold {
        ChartManifold::euclidean_polar()
    }

    fn annulus_cap() -> f64 {
        2.0 * PI / 2f64.ln()
    }

    #[test]
    fn log_potential_on_the_plane() {
        let g = solve_dirichlet(&plane(), &ConductivityField::identity(2), 1.0, 2.0, 128, 128).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..=g.n_r {
            let r = 1.0 + i as f64 * g.dr();
            for j in 0..g.n_theta {
                err = err.max((g.at(i, j) - (1.0 - r.ln() / 2f64.ln())).abs());
            }
        }
        assert!(err < 1e-3, "max nodal error {err}");
        let (lo, hi) = g.min_max();
        assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12);
    }

    #[test]
    fn annulus_capacity_and_scaling() {
        let ladder = doubling_ladder(16, 3);
        let c = capacity(&plane(), &ConductivityField::identity(2), 1.0, 2.0, &ladder).unwrap();
        assert!((c.richardson_extrapolate / annulus_cap() - 1.0).abs() < 1e-3);
        assert!((c.energy_value / annulus_cap() - 1.0).abs() < 1e-2);
        // Galerkin energies decrease towards the true capacity
        assert!(c.ladder.windows(2).all(|w| w[1].energy <= w[0].energy));
        assert!(c.ladder.iter().all(|r| r.energy >= annulus_cap()));
        let c5 = capacity(&plane(), &ConductivityField::scaled_identity(2, 5.0), 1.0, 2.0, &ladder).unwrap();
        assert!((c5.energy_value / c.energy_value - 5.0).abs() < 1e-8);
    }

    #[test]
    fn cartesian_charts_are_pulled_back() {
        let g1 = solve_dirichlet(&ChartManifold::euclidean(2), &ConductivityField::identity(2), 1.0, 2.0, 32, 32).unwrap();
        let g2 = solve_dirichlet(&plane(), &ConductivityField::identity(2), 1.0, 2.0, 32, 32).unwrap();
        assert!((g1.energy - g2.energy).abs() < 1e-9 * g2.energy);
    }

    #[test]
    fn discrete_flux_identities() {
        let w = ConductivityField::new(2, "aniso", |x| {
            DMatrix::from_row_slice(2, 2, &[2.0 + x[1].sin(), 0.0, 0.0, 1.0 + 0.5 * x[1].cos()])
        });
        let g = solve_dirichlet(&plane(), &w, 1.0, 3.0, 64, 64).unwrap();
        assert!((g.energy - g.inner_consistent_flux).abs() < 1e-8 * g.energy);
        assert!((g.inner_consistent_flux - g.outer_consistent_flux).abs() < 1e-7 * g.energy);
        let coarse = solve_dirichlet(&plane(), &w, 1.0, 3.0, 32, 32).unwrap();
        assert!((g.energy - g.flux).abs() < (coarse.energy - coarse.flux).abs());
    }

    #[test]
    fn radial_isotropic_matches_model() {
        // div(e^f ∇u) = 0 gives u'' + u'(1/r + f') = 0, the model equation with h = f
        let f = |r: f64| 0.4 * r;
        let w = ConductivityField::isotropic(2, "e^{0.4 r}", move |x| f(x[0]));
        let g = solve_dirichlet(&plane(), &w, 1.0, 3.0, 128, 64).unwrap();
        let model = WarpedModel::new(2.0, Profile::identity()).unwrap().with_h(Profile::new("0.4 r", f));
        let s = radial_solution(&model, 1.0, 3.0).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..=g.n_r {
            let r = 1.0 + i as f64 * g.dr();
            err = err.max((g.at(i, 5) - s.value(r).unwrap()).abs());
        }
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn warped_cylinder_potential() {
        // metric dr² + w(r)² dθ² with W = Id
        let wp = Profile::new("1 + r^2/4", |r| 1.0 + r * r / 4.0);
        let wc = wp.clone();
        let m = ChartManifold::new(2, vec![(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)], move |x| {
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, wc.value(x[0]).powi(2)])
        })
        .with_pole(Pole::Polar);
        let g = solve_dirichlet(&m, &ConductivityField::identity(2), 1.0, 4.0, 128, 32).unwrap();
        let model = WarpedModel::new(2.0, wp).unwrap();
        let s = radial_solution(&model, 1.0, 4.0).unwrap();
        for i in (0..=128).step_by(16) {
            let r = 1.0 + i as f64 * g.dr();
            assert!((g.at(i, 3) - s.value(r).unwrap()).abs() < 1e-3);
        }
    }

    #[test]
    fn sphere_volumes() {
        let v = vol_w_sphere(&plane(), &ConductivityField::identity(2), 2.0, 64).unwrap();
        assert!((v - 4.0 * PI).abs() < 1e-12);
        let v = vol_w_sphere(&ChartManifold::euclidean(2), &ConductivityField::identity(2), 2.0, 64).unwrap();
        assert!((v - 4.0 * PI).abs() < 1e-10);
        // e^f Id with f = cos θ: 2π R I0(1) on the circle of radius R
        let w = ConductivityField::isotropic(2, "e^cos", |x| x[1].cos());
        let v = vol_w_sphere(&plane(), &w, 1.5, 64).unwrap();
        let i0 = 1.266_065_877_752_008_4;
        assert!((v - 2.0 * PI * 1.5 * i0).abs() < 1e-10);
    }

    #[test]
    fn ratio_sandwich() {
        let b = capacity_ratio_bounds(&plane(), &ConductivityField::scaled_identity(2, 3.0), 1.0, 2.0, 16, 16).unwrap();
        assert!((b.ratio - 3.0).abs() < 1e-9 && (b.lower - 3.0).abs() < 1e-12 && (b.upper - 3.0).abs() < 1e-12);
        let w = ConductivityField::new(2, "diag(1, 1+r^2)", |x| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0 + x[0] * x[0]]));
        let b = capacity_ratio_bounds(&plane(), &w, 1.0, 2.0, 32, 32).unwrap();
        assert!(b.lower >= 1.0 - 1e-12 && b.upper <= 5.0 + 1e-12);
        assert!(b.ratio >= b.lower && b.ratio <= b.upper);
    }

    #[test]
    fn policies_agree_bitwise() {
        let w = ConductivityField::new(2, "aniso", |x| {
            DMatrix::from_row_slice(2, 2, &[2.0 + x[1].sin(), 0.1, 0.1 / (x[0] * x[0]), 1.0])
        });
        let seq = SolverOptions { exec: Exec::Sequential, ..SolverOptions::default() };
        let a = solve_dirichlet_with(&plane(), &w, 1.0, 2.0, 24, 24, &seq, None).unwrap();
        let b = solve_dirichlet_with(&plane(), &w, 1.0, 2.0, 24, 24, &SolverOptions::default(), None).unwrap();
        assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn rejections() {
        let id = ConductivityField::identity(2);
        assert!(matches!(solve_dirichlet(&plane(), &id, 1.0, 2.0, 4, 16), Err(Error::InvalidParameter(_))));
        let skew = ChartManifold::new(2, vec![(0.0, 10.0), (f64::NEG_INFINITY, f64::INFINITY)], |x| {
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, x[0] * x[0]])
        })
        .with_pole(Pole::Polar);
        assert!(matches!(solve_dirichlet(&skew, &id, 1.0, 2.0, 8, 8), Err(Error::NotPolarAdapted { .. })));
        let indefinite = ConductivityField::new(2, "bad", |_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert!(matches!(solve_dirichlet(&plane(), &indefinite, 1.0, 2.0, 8, 8), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn csv_export() {
        let g = solve_dirichlet(&plane(), &ConductivityField::identity(2), 1.0, 2.0, 8, 8).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1 + 9 * 8);
        assert!(s.starts_with("r,theta,u\n1,0,1\n"));
    }
}
