//! Objective functions with exact gradients, a catalog of test landscapes,
//! and numerical checkers for the standing regularity assumptions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Axis-aligned box `[lo_i, hi_i]^d`. All grid machinery works on compact
/// boxes even though the dynamics itself is boundary-free.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid("domain box needs matching non-empty lo/hi"));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::invalid(format!(
                    "domain box axis [{l}, {h}] is empty or non-finite"
                )));
            }
        }
        Ok(DomainBox { lo, hi })
    }

    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        DomainBox::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| v >= l && v <= h)
    }
}

/// An objective `f: R^d -> R` with analytic gradient, a domain box for the
/// grid machinery, and optional analytic metadata used by tests and reports.
///
/// Values are immutable after construction; all methods are pure, so a
/// `Landscape` can be shared freely across threads.
#[derive(Clone)]
pub struct Landscape {
    id: String,
    dim: usize,
    domain: DomainBox,
    eval: EvalFn,
    grad: GradFn,
    /// Constant subtracted from the raw objective by `normalize`.
    shift: f64,
    known_minima: Option<Vec<Vec<f64>>>,
    analytic_depth: Option<f64>,
    analytic_lipschitz: Option<f64>,
}

impl fmt::Debug for Landscape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Landscape")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("shift", &self.shift)
            .finish()
    }
}

/// Report produced by [`Landscape::check_growth_assumption`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct AssumptionReport {
    /// Minimum over the boundary samples of `(|grad f|^2 - lap f) / |x|^2`.
    pub growth_ratio_min: f64,
    /// Whether the sampled Hessian spectrum stays bounded below.
    pub hessian_lower_bound_ok: bool,
    /// Sampled lower bound on the gradient's Lipschitz constant.
    pub lipschitz_estimate: f64,
    pub notes: Vec<String>,
}

/// Strict margin for the quadratic-growth check: ratios below this are
/// flagged even when positive, since the assumption needs a uniform bound.
pub const GROWTH_MARGIN: f64 = 1e-2;

impl Landscape {
    /// Builds a landscape from explicit closures. The catalog constructors
    /// below are preferred; this exists for custom objectives in tests and
    /// embedding code.
    pub fn from_fns(
        id: impl Into<String>,
        dim: usize,
        domain: DomainBox,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 || domain.dim() != dim {
            return Err(Error::invalid("dimension mismatch between domain and dim"));
        }
        Ok(Landscape {
            id: id.into(),
            dim,
            domain,
            eval: Arc::new(eval),
            grad: Arc::new(grad),
            shift: 0.0,
            known_minima: None,
            analytic_depth: None,
            analytic_lipschitz: None,
        })
    }

    /// `f(x) = |x|^2 / 2` on `[-half_width, half_width]^d`.
    pub fn quadratic(dim: usize) -> Self {
        Self::quadratic_with_domain(dim, 8.0)
    }

    pub fn quadratic_with_domain(dim: usize, half_width: f64) -> Self {
        let mut l = Landscape::from_fns(
            "quadratic",
            dim,
            DomainBox::symmetric(dim, half_width).expect("valid box"),
            |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            |x, g| g.copy_from_slice(x),
        )
        .expect("catalog construction");
        l.known_minima = Some(vec![vec![0.0; dim]]);
        l.analytic_depth = Some(0.0);
        l.analytic_lipschitz = Some(1.0);
        l
    }

    /// Tilted double well `f(x) = (x^2-1)^2 + a x` on `[-2, 2]`, `a in [0, 0.5]`.
    pub fn double_well(a: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&a) {
            return Err(Error::invalid(format!(
                "double_well tilt a={a} outside [0, 0.5]"
            )));
        }
        let mut l = Landscape::from_fns(
            "double_well",
            1,
            DomainBox::symmetric(1, 2.0)?,
            move |x| {
                let q = x[0] * x[0] - 1.0;
                q * q + a * x[0]
            },
            move |x, g| g[0] = 4.0 * x[0] * x[0] * x[0] - 4.0 * x[0] + a,
        )?;
        let crit = double_well_critical_points(a);
        l.known_minima = Some(vec![vec![crit.left_min], vec![crit.right_min]]);
        // Barrier from the shallow (higher) well up to the saddle.
        let f = |x: f64| (x * x - 1.0).powi(2) + a * x;
        let (f_l, f_r, f_s) = (f(crit.left_min), f(crit.right_min), f(crit.saddle));
        l.analytic_depth = Some(f_s - f_l.max(f_r));
        // max |f''| = max |12x^2 - 4| over [-2, 2].
        l.analytic_lipschitz = Some(44.0);
        Ok(l)
    }

    /// Degree-6 polynomial with minima at -3/2, 1/2, 3/2 of distinct depths
    /// (global at -3/2) on `[-2.5, 2.5]`. Its dominating barrier is exactly
    /// 2/5: the minimum at 3/2 sits 0.4 below the mountain pass at -1/2.
    pub fn triple_well() -> Self {
        let mut l = Landscape::from_fns(
            "triple_well",
            1,
            DomainBox::symmetric(1, 2.5).expect("valid box"),
            |x| {
                let x = x[0];
                let x2 = x * x;
                let x3 = x2 * x;
                x3 * x3 / 6.0 - x3 * x2 / 5.0 - 0.625 * x2 * x2 + (5.0 / 6.0) * x3
                    + 0.281_25 * x2
                    - 0.562_5 * x
            },
            |x, g| {
                let x = x[0];
                let x2 = x * x;
                // (x^2 - 9/4)(x^2 - 1/4)(x - 1)
                g[0] = (x2 - 2.25) * (x2 - 0.25) * (x - 1.0);
            },
        )
        .expect("catalog construction");
        l.known_minima = Some(vec![vec![-1.5], vec![0.5], vec![1.5]]);
        l.analytic_depth = Some(0.4);
        // max |f''| over [-2.5, 2.5], attained at the left boundary.
        l.analytic_lipschitz = Some(199.0);
        l
    }

    /// `f(x, y) = (x^2-1)^2 + a x + y^2/2` on `[-2, 2] x [-2.5, 2.5]`.
    pub fn double_well_2d(a: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&a) {
            return Err(Error::invalid(format!(
                "double_well_2d tilt a={a} outside [0, 0.5]"
            )));
        }
        let mut l = Landscape::from_fns(
            "double_well_2d",
            2,
            DomainBox::new(vec![-2.0, -2.5], vec![2.0, 2.5])?,
            move |x| {
                let q = x[0] * x[0] - 1.0;
                q * q + a * x[0] + 0.5 * x[1] * x[1]
            },
            move |x, g| {
                g[0] = 4.0 * x[0] * x[0] * x[0] - 4.0 * x[0] + a;
                g[1] = x[1];
            },
        )?;
        let crit = double_well_critical_points(a);
        l.known_minima = Some(vec![vec![crit.left_min, 0.0], vec![crit.right_min, 0.0]]);
        let f = |x: f64| (x * x - 1.0).powi(2) + a * x;
        let (f_l, f_r, f_s) = (f(crit.left_min), f(crit.right_min), f(crit.saddle));
        l.analytic_depth = Some(f_s - f_l.max(f_r));
        l.analytic_lipschitz = Some(44.0);
        Ok(l)
    }

    /// `f = 0` everywhere; exercises the pure-noise increment law.
    pub fn constant_zero(dim: usize) -> Self {
        Landscape::from_fns(
            "constant_zero",
            dim,
            DomainBox::symmetric(dim, 1.0).expect("valid box"),
            |_| 0.0,
            |_, g| g.fill(0.0),
        )
        .expect("catalog construction")
    }

    /// Catalog lookup by string id with a parameter map; this is the surface
    /// the CLI config uses.
    pub fn from_catalog(id: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        match id {
            "quadratic" => {
                let dim = get("dim", 1.0);
                if dim < 1.0 || dim.fract() != 0.0 {
                    return Err(Error::invalid(format!("quadratic dim={dim} invalid")));
                }
                Ok(Landscape::quadratic_with_domain(
                    dim as usize,
                    get("half_width", 8.0),
                ))
            }
            "double_well" => Landscape::double_well(get("a", 0.2)),
            "triple_well" => Ok(Landscape::triple_well()),
            "double_well_2d" => Landscape::double_well_2d(get("a", 0.2)),
            other => Err(Error::invalid(format!(
                "unknown landscape id '{other}'; catalog: {}",
                CATALOG_IDS.join(", ")
            ))),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn known_minima(&self) -> Option<&[Vec<f64>]> {
        self.known_minima.as_deref()
    }

    pub fn analytic_depth(&self) -> Option<f64> {
        self.analytic_depth
    }

    pub fn analytic_lipschitz(&self) -> Option<f64> {
        self.analytic_lipschitz
    }

    /// Objective value at `x` (shifted so the normalized minimum is zero).
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        (self.eval)(x) - self.shift
    }

    /// Analytic gradient at `x`. Unaffected by normalization.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut g = vec![0.0; self.dim];
        (self.grad)(x, &mut g);
        Ok(g)
    }

    /// Gradient into a caller-provided buffer; hot path for the samplers.
    #[inline]
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "point has dim {}, landscape has dim {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate in evaluation point"));
        }
        Ok(())
    }

    /// Returns a landscape shifted so that the minimum over a dense grid of
    /// `resolution` cells per axis is zero. Idempotent up to grid tolerance;
    /// the gradient is unchanged.
    pub fn normalize(&self, resolution: usize) -> Result<Landscape> {
        if resolution < 2 {
            return Err(Error::invalid("normalize needs resolution >= 2"));
        }
        let min = self.grid_min(resolution)?;
        let mut out = self.clone();
        out.shift += min;
        Ok(out)
    }

    /// Minimum of the (current, shifted) objective over cell centers.
    fn grid_min(&self, resolution: usize) -> Result<f64> {
        let d = self.dim;
        let total = (resolution as u128).checked_pow(d as u32).ok_or_else(|| {
            Error::Resource("normalization grid overflows cell budget".into())
        })?;
        if total > crate::depth::CELL_BUDGET as u128 {
            return Err(Error::Resource(format!(
                "normalization grid of {total} cells exceeds budget {}",
                crate::depth::CELL_BUDGET
            )));
        }
        let mut x = vec![0.0; d];
        let mut idx = vec![0usize; d];
        let mut best = f64::INFINITY;
        let n = total as u64;
        for flat in 0..n {
            let mut rem = flat as usize;
            for ax in (0..d).rev() {
                idx[ax] = rem % resolution;
                rem /= resolution;
            }
            for ax in 0..d {
                let h = (self.domain.hi[ax] - self.domain.lo[ax]) / resolution as f64;
                x[ax] = self.domain.lo[ax] + (idx[ax] as f64 + 0.5) * h;
            }
            let v = self.eval_unchecked(&x);
            if v < best {
                best = v;
            }
        }
        Ok(best)
    }

    /// Samples `(|grad f|^2 - lap f)/|x|^2` at `samples` points of norm
    /// `radius` (Laplacian by second-order central differences) and estimates
    /// the Hessian's lower spectral bound on the same points.
    pub fn check_growth_assumption(
        &self,
        radius: f64,
        samples: usize,
    ) -> Result<AssumptionReport> {
        if radius <= 0.0 || samples == 0 {
            return Err(Error::invalid("radius must be > 0 and samples >= 1"));
        }
        let max_r = self
            .domain
            .lo
            .iter()
            .zip(&self.domain.hi)
            .map(|(l, h)| (-l).min(*h))
            .fold(f64::INFINITY, f64::min);
        if radius > max_r {
            return Err(Error::DomainExceeded(format!(
                "radius {radius} exceeds the largest sphere inside the domain box ({max_r})"
            )));
        }

        let mut rng = StreamRng::new(0x6_0BB5, 0);
        let mut notes = Vec::new();
        let mut ratio_min = f64::INFINITY;
        let mut hess_min = f64::INFINITY;
        let mut point = vec![0.0; self.dim];
        for s in 0..samples {
            sphere_point(&mut rng, radius, s, samples, &mut point);
            let g = self.grad(&point)?;
            let grad_sq: f64 = g.iter().map(|v| v * v).sum();
            let lap = self.fd_laplacian(&point);
            let ratio = (grad_sq - lap) / (radius * radius);
            ratio_min = ratio_min.min(ratio);
            hess_min = hess_min.min(self.fd_hessian_min_eig(&point));
        }
        let ok = ratio_min >= GROWTH_MARGIN;
        if !ok {
            notes.push(format!(
                "growth ratio {ratio_min:.3e} fails the strict margin {GROWTH_MARGIN:.0e}; \
                 quadratic growth at infinity is doubtful"
            ));
        }
        let hessian_lower_bound_ok = hess_min.is_finite() && hess_min > -1e6;
        if !hessian_lower_bound_ok {
            notes.push(format!("sampled Hessian lower bound {hess_min:.3e}"));
        }
        Ok(AssumptionReport {
            growth_ratio_min: ratio_min,
            hessian_lower_bound_ok,
            lipschitz_estimate: self.estimate_lipschitz(64.max(samples), 0x11)?,
            notes,
        })
    }

    fn fd_laplacian(&self, x: &[f64]) -> f64 {
        let f0 = self.eval_unchecked(x);
        let mut probe = x.to_vec();
        let mut lap = 0.0;
        for ax in 0..self.dim {
            let h = 1e-4 * x[ax].abs().max(1.0);
            probe[ax] = x[ax] + h;
            let fp = self.eval_unchecked(&probe);
            probe[ax] = x[ax] - h;
            let fm = self.eval_unchecked(&probe);
            probe[ax] = x[ax];
            lap += (fp - 2.0 * f0 + fm) / (h * h);
        }
        lap
    }

    /// Smallest eigenvalue of the central-difference Hessian (d <= 2 exact;
    /// higher d falls back to the diagonal, a crude but safe lower probe).
    fn fd_hessian_min_eig(&self, x: &[f64]) -> f64 {
        let hess = self.fd_hessian(x);
        match self.dim {
            1 => hess[0][0],
            2 => {
                let (a, b, c) = (hess[0][0], hess[0][1], hess[1][1]);
                let tr = a + c;
                let det = a * c - b * b;
                0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())
            }
            _ => (0..self.dim).map(|i| hess[i][i]).fold(f64::INFINITY, f64::min),
        }
    }

    pub(crate) fn fd_hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim;
        let mut h = vec![vec![0.0; d]; d];
        let mut probe = x.to_vec();
        let step = |v: f64| 1e-4 * v.abs().max(1.0);
        let f0 = self.eval_unchecked(x);
        for i in 0..d {
            let hi = step(x[i]);
            probe[i] = x[i] + hi;
            let fp = self.eval_unchecked(&probe);
            probe[i] = x[i] - hi;
            let fm = self.eval_unchecked(&probe);
            probe[i] = x[i];
            h[i][i] = (fp - 2.0 * f0 + fm) / (hi * hi);
            for j in (i + 1)..d {
                let hj = step(x[j]);
                probe[i] = x[i] + hi;
                probe[j] = x[j] + hj;
                let fpp = self.eval_unchecked(&probe);
                probe[j] = x[j] - hj;
                let fpm = self.eval_unchecked(&probe);
                probe[i] = x[i] - hi;
                let fmm = self.eval_unchecked(&probe);
                probe[j] = x[j] + hj;
                let fmp = self.eval_unchecked(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
                h[i][j] = v;
                h[j][i] = v;
            }
        }
        h
    }

    /// Sampled lower bound on the gradient's Lipschitz constant: the maximum
    /// of `|grad f(x) - grad f(y)| / |x - y|` over all pairs among `samples`
    /// points drawn from the domain. Monotone in `samples` for a fixed seed
    /// because the point stream is a prefix stream.
    pub fn estimate_lipschitz(&self, samples: usize, rng_seed: u64) -> Result<f64> {
        if samples < 2 {
            return Err(Error::invalid("estimate_lipschitz needs samples >= 2"));
        }
        let mut rng = StreamRng::new(rng_seed, 0);
        let mut pts = Vec::with_capacity(samples);
        let mut grads = Vec::with_capacity(samples);
        for _ in 0..samples {
            let x: Vec<f64> = (0..self.dim)
                .map(|ax| rng.uniform_in(self.domain.lo[ax], self.domain.hi[ax]))
                .collect();
            let g = self.grad(&x)?;
            pts.push(x);
            grads.push(g);
        }
        let mut best: f64 = 0.0;
        for i in 0..samples {
            for j in (i + 1)..samples {
                let dist: f64 = pts[i]
                    .iter()
                    .zip(&pts[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist < 1e-12 {
                    // Coincident draws carry no slope information.
                    continue;
                }
                let gd: f64 = grads[i]
                    .iter()
                    .zip(&grads[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                best = best.max(gd / dist);
            }
        }
        Ok(best)
    }
}

pub const CATALOG_IDS: [&str; 4] = ["quadratic", "double_well", "triple_well", "double_well_2d"];

struct DoubleWellCrit {
    left_min: f64,
    saddle: f64,
    right_min: f64,
}

/// Roots of `4x^3 - 4x + a = 0` for `a in [0, 0.5]`, by Newton from
/// well-separated starts (the cubic has three real roots in this range).
fn double_well_critical_points(a: f64) -> DoubleWellCrit {
    let newton = |mut x: f64| {
        for _ in 0..64 {
            let fx = 4.0 * x * x * x - 4.0 * x + a;
            let dfx = 12.0 * x * x - 4.0;
            let step = fx / dfx;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        x
    };
    DoubleWellCrit {
        left_min: newton(-1.0),
        saddle: newton(a / 4.0),
        right_min: newton(1.0),
    }
}

/// Deterministic point of norm `radius`: in 1-D alternates the two sphere
/// points; in higher dimensions draws a Gaussian direction and rescales.
fn sphere_point(rng: &mut StreamRng, radius: f64, index: usize, _total: usize, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = if index.is_multiple_of(2) { radius } else { -radius };
        return;
    }
    loop {
        rng.fill_standard_normal(out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in out.iter_mut() {
                *v *= radius / norm;
            }
            return;
        }
    }
}
