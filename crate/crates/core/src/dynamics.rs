//! Synthetic data: the ABC flow on the 3-torus and an overdamped Langevin
//! process in a symmetric double-well potential.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amuset::TrajectoryPair;
use crate::data::Snapshots;
use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// ABC flow parameters and integrator controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Flow time between `x` and `y`.
    pub tau: f64,
    pub dt_initial: f64,
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            a: 3f64.sqrt(),
            b: SQRT_2,
            c: 1.0,
            tau: 5.0,
            dt_initial: 1e-2,
            atol: 1e-8,
            rtol: 1e-8,
            max_steps: 1_000_000,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if ![self.a, self.b, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("flow amplitudes must be finite".into()));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Validation(format!("tau must be non-negative, got {}", self.tau)));
        }
        if !(self.atol > 0.0 && self.rtol > 0.0 && self.dt_initial > 0.0) {
            return Err(Error::Validation("tolerances and initial step must be positive".into()));
        }
        Ok(())
    }
}

/// Velocity of the ABC flow.
pub fn abc_rhs(z: &[f64; 3], cfg: &FlowConfig) -> [f64; 3] {
    [
        cfg.a * z[2].sin() + cfg.c * z[1].cos(),
        cfg.b * z[0].sin() + cfg.a * z[2].cos(),
        cfg.c * z[1].sin() + cfg.b * z[0].cos(),
    ]
}

/// Maps each coordinate into `[0, 2π)`.
pub fn wrap_torus(z: [f64; 3]) -> [f64; 3] {
    z.map(|v| {
        let w = v.rem_euclid(TWO_PI);
        if w >= TWO_PI {
            0.0
        } else {
            w
        }
    })
}

// Dormand–Prince 5(4) tableau; the flow is autonomous so the nodes are not needed
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step: fifth-order solution and error estimate.
fn dopri_step<F: Fn(&[f64; 3]) -> [f64; 3]>(f: &F, z: &[f64; 3], h: f64) -> ([f64; 3], [f64; 3]) {
    let mut k = [[0.0; 3]; 7];
    k[0] = f(z);
    for s in 1..7 {
        let mut zs = *z;
        for (j, kj) in k.iter().enumerate().take(s) {
            for d in 0..3 {
                zs[d] += h * A[s][j] * kj[d];
            }
        }
        k[s] = f(&zs);
    }
    let mut hi = *z;
    let mut err = [0.0; 3];
    for s in 0..7 {
        for d in 0..3 {
            hi[d] += h * B5[s] * k[s][d];
            err[d] += h * (B5[s] - B4[s]) * k[s][d];
        }
    }
    (hi, err)
}

/// Adaptive integration of `ż = f(z)` over `[0, t]`. The local error
/// estimate per unit time is kept below `atol + rtol·|z|` componentwise.
pub fn integrate_adaptive<F: Fn(&[f64; 3]) -> [f64; 3]>(
    f: F,
    z0: [f64; 3],
    t: f64,
    h0: f64,
    atol: f64,
    rtol: f64,
    max_steps: usize,
) -> Result<[f64; 3]> {
    let mut z = z0;
    let mut time = 0.0;
    let mut h = h0.min(t);
    let mut steps = 0;
    while time < t {
        if steps >= max_steps {
            return Err(Error::Integration(format!("exceeded {max_steps} steps at t = {time}")));
        }
        h = h.min(t - time);
        if h <= 1e-14 * t.max(1.0) {
            return Err(Error::Integration(format!("step size underflow at t = {time}")));
        }
        let (next, err) = dopri_step(&f, &z, h);
        // error per unit step, so the accumulated error scales with the tolerance
        let norm = (0..3)
            .map(|d| {
                let scale = atol + rtol * z[d].abs().max(next[d].abs());
                (err[d] / (h.min(1.0) * scale)).abs()
            })
            .fold(0.0, f64::max);
        if !norm.is_finite() {
            return Err(Error::Integration(format!("non-finite state at t = {time}")));
        }
        steps += 1;
        if norm <= 1.0 {
            time += h;
            z = next;
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(z)
}

/// Fixed-step Dormand–Prince integration (fifth-order solution).
pub fn integrate_fixed<F: Fn(&[f64; 3]) -> [f64; 3]>(f: F, z0: [f64; 3], t: f64, steps: usize) -> [f64; 3] {
    let h = t / steps as f64;
    let mut z = z0;
    for _ in 0..steps {
        z = dopri_step(&f, &z, h).0;
    }
    z
}

/// Flows `z0` for time `cfg.tau` and wraps the result onto the torus.
pub fn integrate(z0: [f64; 3], cfg: &FlowConfig) -> Result<[f64; 3]> {
    cfg.validate()?;
    if z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite initial condition".into()));
    }
    if cfg.tau == 0.0 {
        return Ok(wrap_torus(z0));
    }
    let z = integrate_adaptive(|z| abc_rhs(z, cfg), z0, cfg.tau, cfg.dt_initial, cfg.atol, cfg.rtol, cfg.max_steps)?;
    Ok(wrap_torus(z))
}

/// Placement of the initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Sampling {
    /// `n³` points `2π·(i, j, k)/n`, first coordinate fastest.
    Grid,
    /// `n³` i.i.d. uniform points.
    Random { seed: u64 },
}

/// Initial conditions and their images under the flow.
pub fn generate_abc_dataset(n_per_dim: usize, cfg: &FlowConfig, sampling: Sampling) -> Result<TrajectoryPair> {
    if n_per_dim < 2 {
        return Err(Error::Validation(format!("need at least 2 points per dimension, got {n_per_dim}")));
    }
    cfg.validate()?;
    let m = n_per_dim
        .checked_pow(3)
        .ok_or_else(|| Error::Validation("grid too large".into()))?;
    let starts: Vec<[f64; 3]> = match sampling {
        Sampling::Grid => {
            let h = TWO_PI / n_per_dim as f64;
            (0..m)
                .map(|t| {
                    let i = t % n_per_dim;
                    let j = (t / n_per_dim) % n_per_dim;
                    let k = t / (n_per_dim * n_per_dim);
                    [i as f64 * h, j as f64 * h, k as f64 * h]
                })
                .collect()
        }
        Sampling::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m)
                .map(|_| wrap_torus([0; 3].map(|_| rng.random_range(0.0..TWO_PI))))
                .collect()
        }
    };
    let ends = starts.par_iter().map(|z| integrate(*z, cfg)).collect::<Result<Vec<_>>>()?;
    let x = Snapshots::new(3, starts.concat())?;
    let y = Snapshots::new(3, ends.concat())?;
    TrajectoryPair::paired(x, y)
}

/// Overdamped Langevin dynamics in `V(x) = (x² − 1)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    /// Inverse temperature; `f64::INFINITY` switches the noise off.
    pub beta: f64,
    pub dt: f64,
    /// Number of recorded frames, including the initial state.
    pub frames: usize,
    /// Integrator steps between recorded frames.
    pub stride: usize,
    pub x0: f64,
    pub seed: u64,
}

impl Default for SdeConfig {
    fn default() -> Self {
        SdeConfig { beta: 3.0, dt: 1e-3, frames: 100_000, stride: 1, x0: 1.0, seed: 0 }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Validation(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if self.frames == 0 || self.stride == 0 {
            return Err(Error::Validation("frames and stride must be positive".into()));
        }
        if !self.x0.is_finite() {
            return Err(Error::Validation("x0 must be finite".into()));
        }
        Ok(())
    }
}

pub fn double_well_potential(x: f64) -> f64 {
    (x * x - 1.0).powi(2)
}

pub fn double_well_force(x: f64) -> f64 {
    -4.0 * x * (x * x - 1.0)
}

/// Euler–Maruyama for `dx = −V'(x) dt + √(2/β) dW`; a `1 × frames` trajectory.
pub fn simulate_double_well(cfg: &SdeConfig) -> Result<Snapshots> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = if cfg.beta.is_infinite() { 0.0 } else { (2.0 * cfg.dt / cfg.beta).sqrt() };
    let mut x = cfg.x0;
    let mut out = Vec::with_capacity(cfg.frames);
    out.push(x);
    for _ in 1..cfg.frames {
        for _ in 0..cfg.stride {
            let kick: f64 = if noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            x += double_well_force(x) * cfg.dt + noise * kick;
        }
        if !x.is_finite() {
            return Err(Error::Integration("trajectory diverged; reduce dt".into()));
        }
        out.push(x);
    }
    Snapshots::new(1, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_examples() {
        let cfg = FlowConfig::default();
        let v = abc_rhs(&[0.0; 3], &cfg);
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] - 3f64.sqrt()).abs() < 1e-15 && (v[2] - SQRT_2).abs() < 1e-15);
        let v = abc_rhs(&[PI / 2.0; 3], &cfg);
        assert!((v[0] - cfg.a).abs() < 1e-15 && (v[1] - cfg.b).abs() < 1e-15 && (v[2] - cfg.c).abs() < 1e-15);
    }

    #[test]
    fn field_is_divergence_free() {
        let cfg = FlowConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = 1e-5;
        for _ in 0..100 {
            let z = [0; 3].map(|_| rng.random_range(0.0..TWO_PI));
            let mut div = 0.0;
            for d in 0..3 {
                let (mut p, mut m) = (z, z);
                p[d] += h;
                m[d] -= h;
                div += (abc_rhs(&p, &cfg)[d] - abc_rhs(&m, &cfg)[d]) / (2.0 * h);
            }
            assert!(div.abs() <= 1e-6);
        }
    }

    #[test]
    fn trivial_flows() {
        let z0 = [1.0, 2.0, 3.0];
        let cfg = FlowConfig { tau: 0.0, ..FlowConfig::default() };
        assert_eq!(integrate(z0, &cfg).unwrap(), z0);
        let cfg = FlowConfig { a: 0.0, b: 0.0, c: 0.0, ..FlowConfig::default() };
        assert_eq!(integrate(z0, &cfg).unwrap(), z0);
    }

    #[test]
    fn tolerance_halving_is_self_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = FlowConfig::default();
        let fine = FlowConfig { atol: cfg.atol / 2.0, rtol: cfg.rtol / 2.0, ..cfg.clone() };
        for _ in 0..20 {
            let z0 = [0; 3].map(|_| rng.random_range(0.0..TWO_PI));
            let a = integrate_adaptive(|z| abc_rhs(z, &cfg), z0, cfg.tau, 1e-2, cfg.atol, cfg.rtol, 1_000_000).unwrap();
            let b = integrate_adaptive(|z| abc_rhs(z, &fine), z0, cfg.tau, 1e-2, fine.atol, fine.rtol, 1_000_000).unwrap();
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() <= 10.0 * cfg.atol, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn fixed_step_order() {
        let cfg = FlowConfig::default();
        let f = |z: &[f64; 3]| abc_rhs(z, &cfg);
        let z0 = [0.3, 1.1, 4.0];
        let reference = integrate_fixed(f, z0, 1.0, 4096);
        let err = |n| {
            let z = integrate_fixed(f, z0, 1.0, n);
            (0..3).map(|d| (z[d] - reference[d]).abs()).fold(0.0, f64::max)
        };
        let ratio = err(16) / err(32);
        assert!(ratio >= 4.0, "{ratio}");
    }

    #[test]
    fn grid_dataset() {
        let pair = generate_abc_dataset(2, &FlowConfig::default(), Sampling::Grid).unwrap();
        let x = pair.x().unwrap();
        assert_eq!(x.len(), 8);
        assert_eq!(x.snapshot(1), &[PI, 0.0, 0.0]);
        assert_eq!(x.snapshot(7), &[PI, PI, PI]);
        let y = pair.y().unwrap();
        assert!(y.as_slice().iter().all(|&v| (0.0..TWO_PI).contains(&v)));
        let again = generate_abc_dataset(2, &FlowConfig::default(), Sampling::Random { seed: 3 }).unwrap();
        let twice = generate_abc_dataset(2, &FlowConfig::default(), Sampling::Random { seed: 3 }).unwrap();
        assert_eq!(again.y().unwrap(), twice.y().unwrap());
        assert!(generate_abc_dataset(1, &FlowConfig::default(), Sampling::Grid).is_err());
    }

    #[test]
    fn cold_double_well_stays_put() {
        for seed in 0..5 {
            let cfg = SdeConfig { beta: 100.0, frames: 10_000, seed, ..SdeConfig::default() };
            let traj = simulate_double_well(&cfg).unwrap();
            assert!(traj.as_slice().iter().all(|&x| (0.5..=1.5).contains(&x)));
        }
        let cfg = SdeConfig { beta: f64::INFINITY, x0: 0.4, frames: 20_000, ..SdeConfig::default() };
        let traj = simulate_double_well(&cfg).unwrap();
        assert!((traj.as_slice().last().unwrap() - 1.0).abs() < 1e-6);
        let a = simulate_double_well(&SdeConfig { frames: 1000, ..SdeConfig::default() }).unwrap();
        let b = simulate_double_well(&SdeConfig { frames: 1000, ..SdeConfig::default() }).unwrap();
        assert_eq!(a, b);
    }
}
