//! The discrete annealing iteration, constant-temperature Langevin steps,
//! a fine-step Euler reference for the continuous process, and direct Gibbs
//! sampling in one dimension.

use serde::{Deserialize, Serialize};

use crate::analysis::GibbsMeasure1D;
use crate::depth::GridField;
use crate::error::{Error, Result};
use crate::landscape::Landscape;
use crate::rng::StreamRng;
use crate::schedule::{kahan_add, CoolingSchedule, ScheduleTable, StepSchedule};

/// Initial law of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    PointMass { x: Vec<f64> },
    Gaussian { mean: Vec<f64>, stddev: f64 },
}

impl InitialDistribution {
    pub fn point_mass(x: Vec<f64>) -> Self {
        InitialDistribution::PointMass { x }
    }

    pub fn gaussian(mean: Vec<f64>, stddev: f64) -> Result<Self> {
        if !(stddev > 0.0 && stddev.is_finite()) {
            return Err(Error::invalid(format!("gaussian stddev {stddev} must be > 0")));
        }
        Ok(InitialDistribution::Gaussian { mean, stddev })
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialDistribution::PointMass { x } => x.len(),
            InitialDistribution::Gaussian { mean, .. } => mean.len(),
        }
    }

    fn draw(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            InitialDistribution::PointMass { x } => x.clone(),
            InitialDistribution::Gaussian { mean, stddev } => {
                let mut x = vec![0.0; mean.len()];
                rng.fill_standard_normal(&mut x);
                for (v, m) in x.iter_mut().zip(mean) {
                    *v = m + *v * stddev;
                }
                x
            }
        }
    }
}

/// One annealing chain: position, iteration count, cumulative step size
/// (with its Kahan carry), and the chain's private random stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub k: u64,
    pub theta_cum: f64,
    theta_comp: f64,
    pub rng: StreamRng,
}

impl ChainState {
    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Checkpointed record of a single chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub chain_id: u64,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub k: u64,
    pub theta_cum: f64,
    pub tau: f64,
    pub x: Vec<f64>,
    pub f_value: f64,
}

/// Draws the initial position from `mu0` on the stream `(seed, chain_id)`.
pub fn init_chain(mu0: &InitialDistribution, seed: u64, chain_id: u64) -> ChainState {
    let mut rng = StreamRng::new(seed, chain_id);
    let x = mu0.draw(&mut rng);
    ChainState {
        x,
        k: 0,
        theta_cum: 0.0,
        theta_comp: 0.0,
        rng,
    }
}

/// Divergence guard: a chain whose norm exceeds this many domain diameters
/// (or goes non-finite) is reported as diverged rather than propagated.
const DIVERGENCE_FACTOR: f64 = 1e3;

#[inline]
fn check_divergence(x: &[f64], k: u64, domain_diameter: f64) -> Result<()> {
    let norm_sq: f64 = x.iter().map(|v| v * v).sum();
    if !norm_sq.is_finite() || norm_sq > (DIVERGENCE_FACTOR * domain_diameter).powi(2) {
        return Err(Error::Divergence {
            k,
            x: x.to_vec(),
            norm: norm_sq.sqrt(),
        });
    }
    Ok(())
}

/// Shared update `x' = x - eta grad f(x) + sqrt(2 tau eta) z`, advancing the
/// iteration counter and clock.
#[inline]
fn apply_step(
    s: &mut ChainState,
    land: &Landscape,
    eta: f64,
    tau: f64,
    z: &[f64],
    scratch: &mut [f64],
) -> Result<()> {
    land.grad_into(&s.x, scratch);
    let noise_scale = (2.0 * tau * eta).sqrt();
    for (i, xi) in s.x.iter_mut().enumerate() {
        *xi = *xi - scratch[i] * eta + noise_scale * z[i];
    }
    s.k += 1;
    kahan_add(&mut s.theta_cum, &mut s.theta_comp, eta);
    check_divergence(&s.x, s.k, land.domain().diameter())
}

/// One step of the discrete annealing iteration: the step size is
/// `eta_{k+1}` and the temperature is evaluated at the pre-step clock
/// `Theta_k` (left endpoint).
pub fn sa_step(
    s: &mut ChainState,
    land: &Landscape,
    ss: &StepSchedule,
    cs: &CoolingSchedule,
) -> Result<()> {
    let eta = ss.step_size(s.k + 1)?;
    let tau = cs.temperature(s.theta_cum);
    let mut z = vec![0.0; s.dim()];
    s.rng.fill_standard_normal(&mut z);
    let mut scratch = vec![0.0; s.dim()];
    apply_step(s, land, eta, tau, &z, &mut scratch)
}

/// As [`sa_step`] but with caller-supplied noise and without touching the
/// chain's stream; the hook for deterministic-limit tests.
pub fn sa_step_with_noise(
    s: &mut ChainState,
    land: &Landscape,
    ss: &StepSchedule,
    cs: &CoolingSchedule,
    z: &[f64],
) -> Result<()> {
    if z.len() != s.dim() {
        return Err(Error::invalid("noise vector dimension mismatch"));
    }
    let eta = ss.step_size(s.k + 1)?;
    let tau = cs.temperature(s.theta_cum);
    let mut scratch = vec![0.0; s.dim()];
    apply_step(s, land, eta, tau, z, &mut scratch)
}

/// Table-driven step for tight inner loops; bit-identical to [`sa_step`]
/// because the table is built with the same power/log/Kahan arithmetic.
#[inline]
pub fn sa_step_table(
    s: &mut ChainState,
    land: &Landscape,
    table: &ScheduleTable,
    z: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let k_next = (s.k + 1) as usize;
    debug_assert!(k_next < table.eta.len());
    let eta = table.eta[k_next];
    let tau = table.tau_pre[k_next];
    s.rng.fill_standard_normal(z);
    apply_step(s, land, eta, tau, z, scratch)
}

/// Constant-temperature unadjusted Langevin step (the constant-schedule
/// specialization of the annealing update).
pub fn ula_step(s: &mut ChainState, land: &Landscape, eta: f64, tau: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("step size {eta} must be > 0")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature {tau} must be >= 0")));
    }
    let mut z = vec![0.0; s.dim()];
    s.rng.fill_standard_normal(&mut z);
    let mut scratch = vec![0.0; s.dim()];
    apply_step(s, land, eta, tau, &z, &mut scratch)
}

/// Euler-Maruyama reference for the continuous process: constant step `dt`,
/// temperature evaluated at elapsed time. Records up to ~1024 evenly spaced
/// checkpoints, always including the final state.
pub fn fine_euler_reference(
    land: &Landscape,
    cs: &CoolingSchedule,
    dt: f64,
    horizon: f64,
    mu0: &InitialDistribution,
    seed: u64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt {dt} must be > 0")));
    }
    if horizon < dt {
        return Err(Error::invalid(format!(
            "horizon {horizon} must be at least one step dt {dt}"
        )));
    }
    if mu0.dim() != land.dim() {
        return Err(Error::invalid("initial distribution dimension mismatch"));
    }
    let n_steps = (horizon / dt).floor() as u64;
    let record_every = (n_steps / 1024).max(1);
    let mut s = init_chain(mu0, seed, 0);
    let mut z = vec![0.0; land.dim()];
    let mut scratch = vec![0.0; land.dim()];
    let mut checkpoints = Vec::new();
    let record = |s: &ChainState, cs: &CoolingSchedule| Checkpoint {
        k: s.k,
        theta_cum: s.theta_cum,
        tau: cs.temperature(s.theta_cum),
        x: s.x.clone(),
        f_value: land.eval_unchecked(&s.x),
    };
    checkpoints.push(record(&s, cs));
    for step in 1..=n_steps {
        let tau = cs.temperature(s.theta_cum);
        s.rng.fill_standard_normal(&mut z);
        apply_step(&mut s, land, dt, tau, &z, &mut scratch)?;
        if step % record_every == 0 || step == n_steps {
            checkpoints.push(record(&s, cs));
        }
    }
    Ok(Trajectory {
        chain_id: 0,
        checkpoints,
    })
}

/// One inverse-CDF draw from the Gibbs measure of a 1-D grid at temperature
/// `tau`. For bulk sampling build a [`GibbsMeasure1D`] once and reuse it.
pub fn gibbs_sample_1d(g: &GridField, tau: f64, rng: &mut StreamRng) -> Result<f64> {
    let gm = GibbsMeasure1D::new(g, tau)?;
    Ok(gm.sample(rng))
}
