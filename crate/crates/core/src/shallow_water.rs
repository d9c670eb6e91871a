//! One-dimensional shallow-water step on a uniform grid, its exact tangent
//! (Jacobian), and synthetic observation generation.
//!
//! The state holds a height field phi and a velocity field u over n cells.
//! One explicit Euler step with centered differences reads, per cell i and
//! with neighbor indices resolved by the boundary rule,
//!
//!   phi'_i = phi_i + dt * ( u_i   * (phi_{i-1} - phi_{i+1})
//!                         + phi_i * (u_{i-1}   - u_{i+1}) ) / (2 dx)
//!   u'_i   = u_i   + dt * ( (phi_{i-1} - phi_{i+1})
//!                         + u_i * (u_{i-1} - u_{i+1}) ) / (2 dx)
//!
//! The Jacobian of the step couples each output cell to a three-cell
//! stencil, so it is stored as per-role coefficient arrays (O(n) memory)
//! rather than a dense 2n x 2n matrix. The u-row/phi-center block is
//! identically zero; the structure omits it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::streams::{keyed_rng, DOMAIN_OBSERVATIONS};

/// Neighbor resolution at the grid ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Indices wrap around.
    Periodic,
    /// Out-of-range neighbors replicate the edge cell.
    ClampedEdge,
}

impl Boundary {
    fn neighbor(self, i: usize, n: usize, forward: bool) -> usize {
        match (self, forward) {
            (Boundary::Periodic, true) => (i + 1) % n,
            (Boundary::Periodic, false) => (i + n - 1) % n,
            (Boundary::ClampedEdge, true) => (i + 1).min(n - 1),
            (Boundary::ClampedEdge, false) => i.saturating_sub(1),
        }
    }
}

#[derive(Debug, Error)]
pub enum ShallowWaterError {
    #[error("grid needs at least one cell")]
    EmptyGrid,
    #[error("height field has {phi} cells but velocity field has {u}")]
    LengthMismatch { phi: usize, u: usize },
    #[error("{field} contains a non-finite value")]
    NonFinite { field: &'static str },
    #[error("grid spacing dx={dx} and time step dt={dt} must be positive and finite")]
    BadGrid { dx: f64, dt: f64 },
    #[error("observation noise level sigma={sigma} must be non-negative and finite")]
    BadSigma { sigma: f64 },
}

/// Fields plus the grid parameters they evolve under.
#[derive(Debug, Clone, PartialEq)]
pub struct SwState {
    phi: DVector<f64>,
    u: DVector<f64>,
    dx: f64,
    dt: f64,
    boundary: Boundary,
}

impl SwState {
    pub fn new(
        phi: DVector<f64>,
        u: DVector<f64>,
        dx: f64,
        dt: f64,
        boundary: Boundary,
    ) -> Result<Self, ShallowWaterError> {
        if phi.is_empty() {
            return Err(ShallowWaterError::EmptyGrid);
        }
        if phi.len() != u.len() {
            return Err(ShallowWaterError::LengthMismatch {
                phi: phi.len(),
                u: u.len(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(ShallowWaterError::NonFinite { field: "phi" });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(ShallowWaterError::NonFinite { field: "u" });
        }
        if !(dx > 0.0 && dx.is_finite() && dt > 0.0 && dt.is_finite()) {
            return Err(ShallowWaterError::BadGrid { dx, dt });
        }
        Ok(SwState {
            phi,
            u,
            dx,
            dt,
            boundary,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> &DVector<f64> {
        &self.phi
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Stacked [phi; u] vector, the layout the assimilation code works in.
    pub fn state_vector(&self) -> DVector<f64> {
        let n = self.n_cells();
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.phi);
        z.rows_mut(n, n).copy_from(&self.u);
        z
    }

    /// Rebuilds a state from a stacked vector, keeping this state's grid.
    pub fn with_state_vector(&self, z: &DVector<f64>) -> Result<Self, ShallowWaterError> {
        let n = self.n_cells();
        if z.len() != 2 * n {
            return Err(ShallowWaterError::LengthMismatch {
                phi: z.len(),
                u: 2 * n,
            });
        }
        SwState::new(
            z.rows(0, n).into_owned(),
            z.rows(n, n).into_owned(),
            self.dx,
            self.dt,
            self.boundary,
        )
    }

    /// One explicit Euler step.
    pub fn step(&self) -> SwState {
        let n = self.n_cells();
        let r = self.dt / (2.0 * self.dx);
        let mut phi = DVector::zeros(n);
        let mut u = DVector::zeros(n);
        for i in 0..n {
            let im = self.boundary.neighbor(i, n, false);
            let ip = self.boundary.neighbor(i, n, true);
            let dphi = self.phi[im] - self.phi[ip];
            let du = self.u[im] - self.u[ip];
            phi[i] = self.phi[i] + r * (self.u[i] * dphi + self.phi[i] * du);
            u[i] = self.u[i] + r * (dphi + self.u[i] * du);
        }
        SwState {
            phi,
            u,
            dx: self.dx,
            dt: self.dt,
            boundary: self.boundary,
        }
    }

    /// Exact tangent of `step` at this state.
    pub fn jacobian(&self) -> StepJacobian {
        let n = self.n_cells();
        let r = self.dt / (2.0 * self.dx);
        let mut j = StepJacobian {
            n,
            boundary: self.boundary,
            dphi_dphi_m: vec![0.0; n],
            dphi_dphi_0: vec![0.0; n],
            dphi_dphi_p: vec![0.0; n],
            dphi_du_m: vec![0.0; n],
            dphi_du_0: vec![0.0; n],
            dphi_du_p: vec![0.0; n],
            du_dphi_m: vec![0.0; n],
            du_dphi_p: vec![0.0; n],
            du_du_m: vec![0.0; n],
            du_du_0: vec![0.0; n],
            du_du_p: vec![0.0; n],
        };
        for i in 0..n {
            let im = self.boundary.neighbor(i, n, false);
            let ip = self.boundary.neighbor(i, n, true);
            let dphi = self.phi[im] - self.phi[ip];
            let du = self.u[im] - self.u[ip];
            j.dphi_dphi_m[i] = r * self.u[i];
            j.dphi_dphi_0[i] = 1.0 + r * du;
            j.dphi_dphi_p[i] = -r * self.u[i];
            j.dphi_du_m[i] = r * self.phi[i];
            j.dphi_du_0[i] = r * dphi;
            j.dphi_du_p[i] = -r * self.phi[i];
            j.du_dphi_m[i] = r;
            j.du_dphi_p[i] = -r;
            j.du_du_m[i] = r * self.u[i];
            j.du_du_0[i] = 1.0 + r * du;
            j.du_du_p[i] = -r * self.u[i];
        }
        j
    }
}

/// Tangent of one step in stencil form: for each output cell, coefficients
/// against the left neighbor (m), the cell itself (0), and the right
/// neighbor (p) of each input field. With a clamped edge two stencil legs
/// can resolve to the same cell; every application routes through resolved
/// indices and accumulates, so coincident legs add up as they should.
#[derive(Debug, Clone)]
pub struct StepJacobian {
    n: usize,
    boundary: Boundary,
    dphi_dphi_m: Vec<f64>,
    dphi_dphi_0: Vec<f64>,
    dphi_dphi_p: Vec<f64>,
    dphi_du_m: Vec<f64>,
    dphi_du_0: Vec<f64>,
    dphi_du_p: Vec<f64>,
    du_dphi_m: Vec<f64>,
    du_dphi_p: Vec<f64>,
    du_du_m: Vec<f64>,
    du_du_0: Vec<f64>,
    du_du_p: Vec<f64>,
}

impl StepJacobian {
    pub fn n_cells(&self) -> usize {
        self.n
    }

    /// Applies the tangent to a stacked [phi; u] direction.
    pub fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), 2 * self.n, "direction length mismatch");
        let mut w = DVector::zeros(2 * self.n);
        self.apply_into(v.as_slice(), w.as_mut_slice());
        w
    }

    /// Applies the tangent to every column of a 2n x k matrix.
    pub fn apply_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), 2 * self.n, "column length mismatch");
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for c in 0..m.ncols() {
            let src = m.column(c).into_owned();
            let mut dst = vec![0.0; 2 * self.n];
            self.apply_into(src.as_slice(), &mut dst);
            out.column_mut(c).copy_from_slice(&dst);
        }
        out
    }

    fn apply_into(&self, v: &[f64], w: &mut [f64]) {
        let n = self.n;
        let (vphi, vu) = v.split_at(n);
        for i in 0..n {
            let im = self.boundary.neighbor(i, n, false);
            let ip = self.boundary.neighbor(i, n, true);
            w[i] = self.dphi_dphi_m[i] * vphi[im]
                + self.dphi_dphi_0[i] * vphi[i]
                + self.dphi_dphi_p[i] * vphi[ip]
                + self.dphi_du_m[i] * vu[im]
                + self.dphi_du_0[i] * vu[i]
                + self.dphi_du_p[i] * vu[ip];
            w[n + i] = self.du_dphi_m[i] * vphi[im]
                + self.du_dphi_p[i] * vphi[ip]
                + self.du_du_m[i] * vu[im]
                + self.du_du_0[i] * vu[i]
                + self.du_du_p[i] * vu[ip];
        }
    }

    /// Materializes the full 2n x 2n matrix; meant for small grids and
    /// cross-checks.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut d = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let im = self.boundary.neighbor(i, n, false);
            let ip = self.boundary.neighbor(i, n, true);
            d[(i, im)] += self.dphi_dphi_m[i];
            d[(i, i)] += self.dphi_dphi_0[i];
            d[(i, ip)] += self.dphi_dphi_p[i];
            d[(i, n + im)] += self.dphi_du_m[i];
            d[(i, n + i)] += self.dphi_du_0[i];
            d[(i, n + ip)] += self.dphi_du_p[i];
            d[(n + i, im)] += self.du_dphi_m[i];
            d[(n + i, ip)] += self.du_dphi_p[i];
            d[(n + i, n + im)] += self.du_du_m[i];
            d[(n + i, n + i)] += self.du_du_0[i];
            d[(n + i, n + ip)] += self.du_du_p[i];
        }
        d
    }
}

/// Runs `n_steps` steps and returns the whole trajectory, initial state
/// included (length n_steps + 1).
pub fn simulate(initial: &SwState, n_steps: usize) -> Vec<SwState> {
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(initial.clone());
    for _ in 0..n_steps {
        let next = out.last().unwrap().step();
        out.push(next);
    }
    out
}

/// Synthetic observations along a trajectory: the height field plus
/// Gaussian noise of level `sigma`, and exact zeros on the velocity half
/// (velocities are unobserved). One vector per trajectory state; the noise
/// stream is keyed by the state's position, so truncating or extending the
/// trajectory leaves earlier observations unchanged.
pub fn generate_observations(
    trajectory: &[SwState],
    sigma: f64,
    seed: u64,
) -> Result<Vec<DVector<f64>>, ShallowWaterError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ShallowWaterError::BadSigma { sigma });
    }
    let mut out = Vec::with_capacity(trajectory.len());
    for (t, state) in trajectory.iter().enumerate() {
        let n = state.n_cells();
        let mut rng = keyed_rng(seed, DOMAIN_OBSERVATIONS, t as u64);
        let mut y = DVector::zeros(2 * n);
        for i in 0..n {
            let noise: f64 = rng.sample(StandardNormal);
            y[i] = state.phi[i] + sigma * noise;
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn hand_state() -> SwState {
        SwState::new(
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            DVector::from_vec(vec![0.1, 0.2, 0.3]),
            0.5,
            0.1,
            Boundary::Periodic,
        )
        .unwrap()
    }

    fn random_state(n: usize, boundary: Boundary, seed: u64) -> SwState {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let phi = DVector::from_fn(n, |_, _| rng.gen_range(0.5..2.0));
        let u = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        SwState::new(phi, u, 0.7, 0.05, boundary).unwrap()
    }

    /// Second transcription of the update, written stencil-first, to catch
    /// copying mistakes in `step`.
    fn step_oracle(s: &SwState) -> (Vec<f64>, Vec<f64>) {
        let n = s.n_cells();
        let mut phi = vec![0.0; n];
        let mut u = vec![0.0; n];
        for i in 0..n {
            let im = s.boundary().neighbor(i, n, false);
            let ip = s.boundary().neighbor(i, n, true);
            let grad_phi = (s.phi()[im] - s.phi()[ip]) / (2.0 * s.dx());
            let grad_u = (s.u()[im] - s.u()[ip]) / (2.0 * s.dx());
            phi[i] = s.phi()[i] + s.dt() * (s.u()[i] * grad_phi + s.phi()[i] * grad_u);
            u[i] = s.u()[i] + s.dt() * (grad_phi + s.u()[i] * grad_u);
        }
        (phi, u)
    }

    #[test]
    fn three_cell_step_matches_hand_computation() {
        let next = hand_state().step();
        let phi_expect = [1.02, 1.92, 3.06];
        let u_expect = [0.201, -0.004, 0.403];
        for i in 0..3 {
            assert!((next.phi()[i] - phi_expect[i]).abs() < 1e-12, "phi[{i}]");
            assert!((next.u()[i] - u_expect[i]).abs() < 1e-12, "u[{i}]");
        }
    }

    #[test]
    fn step_agrees_with_independent_transcription() {
        for boundary in [Boundary::Periodic, Boundary::ClampedEdge] {
            let s = random_state(17, boundary, 42);
            let next = s.step();
            let (phi, u) = step_oracle(&s);
            for i in 0..17 {
                assert_relative_eq!(next.phi()[i], phi[i], max_relative = 1e-14);
                assert_relative_eq!(next.u()[i], u[i], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        for boundary in [Boundary::Periodic, Boundary::ClampedEdge] {
            let s = random_state(5, boundary, 7);
            let dense = s.jacobian().to_dense();
            let z = s.state_vector();
            let h = 1e-6;
            for j in 0..z.len() {
                let mut zp = z.clone();
                zp[j] += h;
                let mut zm = z.clone();
                zm[j] -= h;
                let fp = s.with_state_vector(&zp).unwrap().step().state_vector();
                let fm = s.with_state_vector(&zm).unwrap().step().state_vector();
                for i in 0..z.len() {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let got = dense[(i, j)];
                    let scale = fd.abs().max(got.abs()).max(1.0);
                    assert!(
                        (fd - got).abs() <= 1e-6 * scale,
                        "{boundary:?} entry ({i},{j}): fd {fd} vs exact {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn jacobian_frozen_entries_on_the_hand_state() {
        let dense = hand_state().jacobian().to_dense();
        // r = dt / (2 dx) = 0.1.
        assert!((dense[(0, 2)] - 0.01).abs() < 1e-15); // d phi'_0 / d phi_2 = r u_0
        assert!((dense[(0, 0)] - 1.01).abs() < 1e-15); // 1 + r (u_2 - u_1)
        assert!((dense[(4, 4)] - 0.98).abs() < 1e-15); // d u'_1 / d u_1 = 1 + r (u_0 - u_2)
        assert!((dense[(3, 2)] - 0.1).abs() < 1e-15); // d u'_0 / d phi_2 = r
    }

    #[test]
    fn velocity_rows_have_exact_zero_on_their_own_height_cell() {
        for boundary in [Boundary::Periodic, Boundary::ClampedEdge] {
            let s = random_state(6, boundary, 11);
            let dense = s.jacobian().to_dense();
            let n = s.n_cells();
            for i in 1..n - 1 {
                // Interior velocity rows never touch their own cell's height.
                assert_eq!(dense[(n + i, i)], 0.0, "{boundary:?} row {i}");
            }
            if matches!(boundary, Boundary::Periodic) {
                assert_eq!(dense[(n, 0)], 0.0);
                assert_eq!(dense[(2 * n - 1, n - 1)], 0.0);
            }
        }
    }

    #[test]
    fn stencil_application_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for boundary in [Boundary::Periodic, Boundary::ClampedEdge] {
            let s = random_state(9, boundary, 13);
            let j = s.jacobian();
            let dense = j.to_dense();
            let v = DVector::from_fn(18, |_, _| rng.gen_range(-1.0..1.0));
            let via_stencil = j.apply_vec(&v);
            let via_dense = &dense * &v;
            assert_relative_eq!(via_stencil, via_dense, epsilon = 1e-13);

            let m = DMatrix::from_fn(18, 4, |_, _| rng.gen_range(-1.0..1.0));
            let via_stencil = j.apply_mat(&m);
            let via_dense = &dense * &m;
            assert_relative_eq!(via_stencil, via_dense, epsilon = 1e-13);
        }
    }

    #[test]
    fn tangent_predicts_small_perturbations() {
        let s = random_state(8, Boundary::Periodic, 21);
        let j = s.jacobian();
        let z = s.state_vector();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let dir = DVector::from_fn(16, |_, _| rng.gen_range(-1.0..1.0));
        let eps = 1e-7;
        let moved = s
            .with_state_vector(&(&z + eps * &dir))
            .unwrap()
            .step()
            .state_vector();
        let base = s.step().state_vector();
        let predicted = eps * j.apply_vec(&dir);
        let err = (&moved - &base - &predicted).norm();
        assert!(err < 1e-12, "linearization error {err}");
    }

    #[test]
    fn simulate_returns_initial_plus_each_step() {
        let s = hand_state();
        let traj = simulate(&s, 3);
        assert_eq!(traj.len(), 4);
        assert_eq!(traj[0], s);
        assert_eq!(traj[1], s.step());
        assert_eq!(traj[3], s.step().step().step());
    }

    #[test]
    fn quiescent_uniform_state_is_a_fixed_point() {
        let s = SwState::new(
            DVector::from_element(10, 2.5),
            DVector::zeros(10),
            1.0,
            0.5,
            Boundary::Periodic,
        )
        .unwrap();
        let next = s.step();
        assert_eq!(next.phi(), s.phi());
        assert_eq!(next.u(), s.u());
    }

    #[test]
    fn observations_are_deterministic_and_leave_velocity_zero() {
        let traj = simulate(&hand_state(), 2);
        let a = generate_observations(&traj, 0.3, 99).unwrap();
        let b = generate_observations(&traj, 0.3, 99).unwrap();
        let c = generate_observations(&traj, 0.3, 100).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for y in &a {
            assert_eq!(y.len(), 6);
            assert_eq!(y[3], 0.0);
            assert_eq!(y[4], 0.0);
            assert_eq!(y[5], 0.0);
        }
        // Truncation keeps the shared prefix.
        let short = generate_observations(&traj[..2], 0.3, 99).unwrap();
        assert_eq!(short[0], a[0]);
        assert_eq!(short[1], a[1]);
        // Zero noise returns the exact heights.
        let clean = generate_observations(&traj, 0.0, 1).unwrap();
        for (y, s) in clean.iter().zip(&traj) {
            for i in 0..3 {
                assert_eq!(y[i], s.phi()[i]);
            }
        }
    }

    #[test]
    fn slow_regime_stays_bounded_over_many_steps() {
        // Parabolic height profile with a tiny time step: 640 steps should
        // barely move the state and certainly stay finite.
        let n = 200;
        let phi = DVector::from_fn(n, |i, _| {
            let d = i as f64 - 100.0;
            d * d / 1e4
        });
        let u = DVector::from_element(n, 0.5);
        let s = SwState::new(phi, u, 100.0, 1e-11, Boundary::Periodic).unwrap();
        let traj = simulate(&s, 640);
        let last = traj.last().unwrap();
        let drift_phi = (last.phi() - s.phi()).amax();
        let drift_u = (last.u() - s.u()).amax();
        assert!(drift_phi.is_finite() && drift_u.is_finite());
        assert!(drift_phi < 1e-9, "height drift {drift_phi}");
        assert!(drift_u < 1e-9, "velocity drift {drift_u}");
    }

    #[test]
    fn rejects_malformed_states() {
        let phi = DVector::from_vec(vec![1.0, 2.0]);
        let u = DVector::from_vec(vec![0.1]);
        assert!(matches!(
            SwState::new(phi, u, 1.0, 1.0, Boundary::Periodic),
            Err(ShallowWaterError::LengthMismatch { .. })
        ));
        assert!(matches!(
            SwState::new(
                DVector::zeros(0),
                DVector::zeros(0),
                1.0,
                1.0,
                Boundary::Periodic
            ),
            Err(ShallowWaterError::EmptyGrid)
        ));
        assert!(SwState::new(
            DVector::from_vec(vec![f64::NAN]),
            DVector::zeros(1),
            1.0,
            1.0,
            Boundary::Periodic
        )
        .is_err());
        assert!(SwState::new(
            DVector::zeros(1),
            DVector::zeros(1),
            0.0,
            1.0,
            Boundary::Periodic
        )
        .is_err());
        assert!(SwState::new(
            DVector::zeros(1),
            DVector::zeros(1),
            1.0,
            -1.0,
            Boundary::Periodic
        )
        .is_err());
        let s = hand_state();
        assert!(s.with_state_vector(&DVector::zeros(5)).is_err());
        assert!(generate_observations(&[s], -0.1, 1).is_err());
    }
}
