//! Support-theorem reenactments: force the LFPP metric toward a target by
//! setting the smooth part of the decomposition deterministically, and add
//! measure mass through checkerboard bump fields without disturbing the
//! metric.
//!
//! The randomness is the slab field alone; the rare smooth-part event of the
//! conditioning argument is realized by construction.

use crate::constants::LqgConstants;
use crate::error::{Error, Result};
use crate::field::{Field, GridSpec, Point};
use crate::measure::{gmc_cell_masses, measure_of_set, DiscreteMeasure};
use crate::metric::{DistanceEngine, Region, Stencil};
use crate::report::{mean, pairwise_sum, sample_variance};
use crate::sampler::{mollify, sample_slab_field};
use crate::stats::{default_mollification, estimate_nu, NuEstimate, NuParams};
use rayon::prelude::*;
use serde::Serialize;

// ---------------------------------------------------------------------------
// Checkerboard bump plan
// ---------------------------------------------------------------------------

/// Parity-selected checkerboard sub-squares around each atom, carrying at
/// least a quarter of the local mass, plus the collar width and well depth
/// used by the bump field.
#[derive(Debug, Clone, Serialize)]
pub struct BumpPlan {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Square half-width `r`.
    pub half_width: f64,
    /// Checkerboard subdivision count `K` (cells of side `r/2K`).
    pub checkerboard: usize,
    /// Well depth `N`.
    pub well_depth: f64,
    /// Collar width `rho < r/K`.
    pub collar: f64,
    pub parities: Vec<(u8, u8)>,
    /// `a_i = mu(X_i^K)`.
    pub target_masses: Vec<f64>,
    /// `mu(z_i + [-r,r]^2)` per atom.
    pub square_masses: Vec<f64>,
    /// Measured collar-to-plateau mass ratios at the chosen collar.
    pub collar_ratios: Vec<f64>,
}

/// Index of the checkerboard cell containing `p` (coordinates relative to
/// the square center), or `None` outside `[-r, r)^2`.
fn checkerboard_cell(p: Point, r: f64, k: usize) -> Option<(i64, i64)> {
    let step = r / (2.0 * k as f64);
    let mx = ((p.x + r) / step).floor() as i64;
    let my = ((p.y + r) / step).floor() as i64;
    let cells = 4 * k as i64;
    if mx < 0 || my < 0 || mx >= cells || my >= cells {
        None
    } else {
        Some((mx, my))
    }
}

/// Is `p` (relative to the square center) inside the parity class?
pub fn in_checkerboard(p: Point, r: f64, k: usize, parity: (u8, u8)) -> bool {
    match checkerboard_cell(p, r, k) {
        Some((mx, my)) => (mx & 1) as u8 == parity.0 && (my & 1) as u8 == parity.1,
        None => false,
    }
}

/// Euclidean distance from `p` (relative to the square center) to the parity
/// class `X^K` inside `[-r,r]^2`: scan the cell window around `p`.
pub fn dist_to_checkerboard(p: Point, r: f64, k: usize, parity: (u8, u8)) -> f64 {
    let step = r / (2.0 * k as f64);
    let cells = 4 * k as i64;
    let cx = ((p.x + r) / step).floor() as i64;
    let cy = ((p.y + r) / step).floor() as i64;
    let mut best = f64::INFINITY;
    // Cells of the parity class repeat with period 2 in each axis, so a
    // window of +-3 around the clamped cell always contains the nearest one.
    let base_x = cx.clamp(0, cells - 1);
    let base_y = cy.clamp(0, cells - 1);
    for dx in -3..=3i64 {
        for dy in -3..=3i64 {
            let mx = base_x + dx;
            let my = base_y + dy;
            if mx < 0 || my < 0 || mx >= cells || my >= cells {
                continue;
            }
            if (mx & 1) as u8 != parity.0 || (my & 1) as u8 != parity.1 {
                continue;
            }
            let lo_x = -r + mx as f64 * step;
            let lo_y = -r + my as f64 * step;
            let qx = p.x.clamp(lo_x, lo_x + step);
            let qy = p.y.clamp(lo_y, lo_y + step);
            let d = ((p.x - qx).powi(2) + (p.y - qy).powi(2)).sqrt();
            best = best.min(d);
        }
    }
    best
}

fn dist_to_rect(p: Point, center: Point, half: f64) -> f64 {
    let dx = ((p.x - center.x).abs() - half).max(0.0);
    let dy = ((p.y - center.y).abs() - half).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone)]
pub struct BumpParams {
    pub half_width: f64,
    pub checkerboard: usize,
    pub well_depth: f64,
    /// Collar mass-ratio target.
    pub zeta: f64,
}

/// Select parities maximizing the checkerboard mass, set `a_i`, and scan a
/// geometric collar ladder from `r/2K` downward until the collar-to-plateau
/// mass ratio drops below `zeta`.
pub fn plan_bumps(
    measure: &DiscreteMeasure,
    points: &[Point],
    weights: &[f64],
    params: &BumpParams,
) -> Result<BumpPlan> {
    if points.len() != weights.len() || points.is_empty() {
        return Err(Error::config("need matching, nonempty points and weights"));
    }
    if weights.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::config("bump weights must be positive"));
    }
    let r = params.half_width;
    let k = params.checkerboard;
    if !(r > 0.0) || k == 0 {
        return Err(Error::config("need half_width > 0 and checkerboard K >= 1"));
    }
    let support = measure.support();
    let mass_where = |pred: &dyn Fn(Point) -> bool| -> f64 {
        let kept: Vec<f64> = support
            .iter()
            .filter(|&&(p, _)| pred(p))
            .map(|&(_, m)| m)
            .collect();
        pairwise_sum(&kept)
    };
    let mut parities = Vec::new();
    let mut target_masses = Vec::new();
    let mut square_masses = Vec::new();
    for &zi in points {
        let mut best = (0u8, 0u8);
        let mut best_mass = -1.0;
        for j1 in 0..2u8 {
            for j2 in 0..2u8 {
                let m = mass_where(&|p| in_checkerboard(p - zi, r, k, (j1, j2)));
                if m > best_mass {
                    best_mass = m;
                    best = (j1, j2);
                }
            }
        }
        if !(best_mass > 0.0) {
            return Err(Error::precondition(format!(
                "no mass in any parity class around ({}, {})",
                zi.x, zi.y
            )));
        }
        parities.push(best);
        target_masses.push(best_mass);
        square_masses.push(mass_where(&|p| {
            (p.x - zi.x).abs() <= r && (p.y - zi.y).abs() <= r
        }));
    }
    // Collar ladder: rho = r/2K, r/4K, ... until the ratio bound holds.
    let mut rho = r / (2.0 * k as f64);
    let resolution = match measure {
        DiscreteMeasure::Grid { spec, .. } => spec.spacing,
        DiscreteMeasure::Atoms { .. } => 0.0,
    };
    let collar_ratios = loop {
        let ratios: Vec<f64> = points
            .iter()
            .zip(parities.iter().zip(target_masses.iter()))
            .map(|(&zi, (&parity, &a))| {
                let collar = mass_where(&|p| {
                    let rel = p - zi;
                    let d = dist_to_checkerboard(rel, r, k, parity);
                    d > 0.0 && d <= rho
                });
                collar / a
            })
            .collect();
        if ratios.iter().all(|&q| q <= params.zeta) {
            break ratios;
        }
        rho *= 0.5;
        if rho < 2.0 * resolution {
            return Err(Error::precondition(format!(
                "no collar on the ladder meets ratio {} (measured {:?})",
                params.zeta, ratios
            )));
        }
    };
    // The fattened squares z_i + [-r-2rho, r+2rho]^2 must stay pairwise
    // disjoint and clear of the unit circle.
    let reach = r + 2.0 * rho;
    for (i, zi) in points.iter().enumerate() {
        for zj in points.iter().skip(i + 1) {
            if (zi.x - zj.x).abs() < 2.0 * reach && (zi.y - zj.y).abs() < 2.0 * reach {
                return Err(Error::config(format!(
                    "bump squares around ({}, {}) and ({}, {}) overlap",
                    zi.x, zi.y, zj.x, zj.y
                )));
            }
        }
        // the box avoids the circle iff its min norm exceeds 1 or its max
        // norm stays below 1
        let dmin_x = (zi.x.abs() - reach).max(0.0);
        let dmin_y = (zi.y.abs() - reach).max(0.0);
        let dmin = (dmin_x * dmin_x + dmin_y * dmin_y).sqrt();
        let dmax_x = zi.x.abs() + reach;
        let dmax_y = zi.y.abs() + reach;
        let dmax = (dmax_x * dmax_x + dmax_y * dmax_y).sqrt();
        if !(dmin > 1.0 || dmax < 1.0) {
            return Err(Error::config(format!(
                "bump square at ({}, {}) touches the unit circle",
                zi.x, zi.y
            )));
        }
    }
    Ok(BumpPlan {
        points: points.to_vec(),
        weights: weights.to_vec(),
        half_width: r,
        checkerboard: k,
        well_depth: params.well_depth,
        collar: rho,
        parities,
        target_masses,
        square_masses,
        collar_ratios,
    })
}

/// The bump field `phi_N`: plateau `log(C_i/a_i)` on `X_i^K`, well `-N` on
/// the square minus the collar, zero outside `z_i + [-r-2rho, r+2rho]^2`,
/// C^2 ramps in distance-to-set coordinates between.
pub fn build_bump_field(plan: &BumpPlan, spec: GridSpec) -> Field {
    let r = plan.half_width;
    let k = plan.checkerboard;
    let rho = plan.collar;
    let n_depth = plan.well_depth;
    let mut field = Field::zeros(spec);
    for (idx, &zi) in plan.points.iter().enumerate() {
        let parity = plan.parities[idx];
        let plateau = (plan.weights[idx] / plan.target_masses[idx]).ln();
        let reach = r + 2.0 * rho;
        for i in 0..spec.n {
            for j in 0..spec.n {
                let p = spec.node(i, j);
                if (p.x - zi.x).abs() > reach || (p.y - zi.y).abs() > reach {
                    continue;
                }
                let rel = p - zi;
                let d_x = dist_to_checkerboard(rel, r, k, parity);
                let a = 1.0 - crate::constants::smootherstep(d_x / rho);
                let d_box = dist_to_rect(p, zi, r + rho);
                let b = 1.0 - crate::constants::smootherstep(d_box / rho);
                field.values[[i, j]] += a * plateau + (1.0 - a) * b * (-n_depth);
            }
        }
    }
    field.note = format!(
        "checkerboard bump field: {} atoms, K = {}, rho = {:.4e}, N = {}",
        plan.points.len(),
        k,
        rho,
        n_depth
    );
    field
}

// ---------------------------------------------------------------------------
// Measure edit check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MeasureEditReport {
    /// One entry per test function: `|integral - sum C_i g(z_i)|`.
    pub errors: Vec<f64>,
    pub integrals: Vec<f64>,
    pub targets: Vec<f64>,
    /// Paper-shaped budget terms per test function.
    pub collar_terms: Vec<f64>,
    pub far_field_terms: Vec<f64>,
    pub plateau_oscillation_terms: Vec<f64>,
}

/// Compare `integral g e^{phi_N} d mu` against `sum_i C_i g(z_i)` for each
/// test function, reporting the error-budget terms separately.
pub fn check_measure_edit(
    measure: &DiscreteMeasure,
    plan: &BumpPlan,
    phi: &Field,
    test_fns: &[&dyn Fn(Point) -> f64],
) -> Result<MeasureEditReport> {
    let support = measure.support();
    let mut errors = Vec::new();
    let mut integrals = Vec::new();
    let mut targets = Vec::new();
    let mut collar_terms = Vec::new();
    let mut far_terms = Vec::new();
    let mut osc_terms = Vec::new();
    for g in test_fns {
        let prods: Vec<f64> = support
            .iter()
            .map(|&(p, m)| g(p) * phi.interp(p).exp() * m)
            .collect();
        let integral = pairwise_sum(&prods);
        let target: f64 = plan
            .points
            .iter()
            .zip(plan.weights.iter())
            .map(|(&z, &c)| c * g(z))
            .sum();
        let sup_g = support
            .iter()
            .map(|&(p, _)| g(p).abs())
            .fold(0.0f64, f64::max);
        let collar: f64 = plan
            .points
            .iter()
            .enumerate()
            .map(|(i, _)| sup_g * plan.weights[i] * plan.collar_ratios[i])
            .sum();
        let far_mass: f64 = {
            let kept: Vec<f64> = support
                .iter()
                .filter(|&&(p, _)| {
                    plan.points.iter().zip(plan.parities.iter()).all(|(&z, &par)| {
                        dist_to_checkerboard(p - z, plan.half_width, plan.checkerboard, par)
                            > plan.collar
                    })
                })
                .map(|&(_, m)| m)
                .collect();
            pairwise_sum(&kept)
        };
        let far = sup_g * far_mass;
        let osc: f64 = plan
            .points
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let scale = plan.weights[i] / plan.target_masses[i];
                let vals: Vec<f64> = support
                    .iter()
                    .filter(|&&(p, _)| {
                        in_checkerboard(p - z, plan.half_width, plan.checkerboard, plan.parities[i])
                    })
                    .map(|&(p, m)| (g(p) - g(z)).abs() * m)
                    .collect();
                scale * pairwise_sum(&vals)
            })
            .sum();
        errors.push((integral - target).abs());
        integrals.push(integral);
        targets.push(target);
        collar_terms.push(collar);
        far_terms.push(far);
        osc_terms.push(osc);
    }
    Ok(MeasureEditReport {
        errors,
        integrals,
        targets,
        collar_terms,
        far_field_terms: far_terms,
        plateau_oscillation_terms: osc_terms,
    })
}

// ---------------------------------------------------------------------------
// Metric preservation check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MetricPreservedReport {
    /// `sup |D - e^{(xi/gamma) phi_N} . D|` over the probe pairs.
    pub deviation: f64,
    /// Worst checkerboard-cell crossing diagnostic
    /// `(4|C_i| / mu(z_i+[-r,r]^2)) * (r/2K)`.
    pub crossing_diagnostic: f64,
    /// Well traversal diagnostic `exp(-(xi/gamma) N) * M` with `M` the
    /// measured D-diameter of the widest bump neighborhood.
    pub well_diagnostic: f64,
    /// Largest plain-D diameter of a bump neighborhood (re-routing cost).
    pub square_diameter: f64,
    /// Budget `atoms * (2*crossing + well + square diameter)`.
    pub budget: f64,
    pub pass: bool,
}

/// Check that the bump field leaves the metric nearly unchanged:
/// weyl-scale the engine by `phi_N / gamma` and compare distances over the
/// probe pairs against the documented crossing/well budget.
pub fn check_metric_preserved(
    engine: &DistanceEngine,
    constants: &LqgConstants,
    plan: &BumpPlan,
    phi: &Field,
    pairs: &[(Point, Point)],
) -> Result<MetricPreservedReport> {
    let gamma = constants.gamma();
    let xi = constants.xi();
    let mut scaled_field = phi.clone();
    scaled_field.values.mapv_inplace(|v| v / gamma);
    let scaled = engine.weyl_scale(&scaled_field)?;
    let mut deviation: f64 = 0.0;
    for &(x, y) in pairs {
        let d0 = engine.distance(x, y, &Region::Whole)?;
        let d1 = scaled.distance(x, y, &Region::Whole)?;
        deviation = deviation.max((d0 - d1).abs());
    }
    let crossing = plan
        .points
        .iter()
        .enumerate()
        .map(|(i, _)| {
            4.0 * plan.weights[i].abs() / plan.square_masses[i] * plan.half_width
                / (2.0 * plan.checkerboard as f64)
        })
        .fold(0.0f64, f64::max);
    let mut square_diam: f64 = 0.0;
    for &zi in &plan.points {
        let reach = plan.half_width + 2.0 * plan.collar;
        let region = Region::rect(
            Point::new(zi.x - reach, zi.y - reach),
            Point::new(zi.x + reach, zi.y + reach),
        );
        square_diam = square_diam.max(engine.diameter(&region, 12)?);
    }
    let well = (-(xi / gamma) * plan.well_depth).exp() * square_diam;
    let budget = plan.points.len() as f64 * (2.0 * crossing + well + square_diam);
    Ok(MetricPreservedReport {
        deviation,
        crossing_diagnostic: crossing,
        well_diagnostic: well,
        square_diameter: square_diam,
        budget,
        pass: deviation <= budget,
    })
}

// ---------------------------------------------------------------------------
// Flat support demo
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FlatDemoParams {
    pub grid_n: usize,
    /// Spacing at `beta`; demos across a beta ladder keep `spacing/beta`
    /// fixed so one matched time-constant estimate applies to every rung.
    pub spacing: f64,
    pub beta: f64,
    pub seed: u64,
    pub stencil: Stencil,
    pub metric_replicas: usize,
    pub mass_replicas: usize,
    pub pair_count: usize,
    /// Flips the sign of the deterministic shift (power check).
    pub wrong_shift_sign: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlatDemoReport {
    pub beta: f64,
    pub seed: u64,
    pub nu_estimate: f64,
    pub nu_ci95: f64,
    /// Per-replica `sup |D_h - e^{xi f} d0|` over the sampled pairs.
    pub deviations: Vec<f64>,
    pub deviation_mean: f64,
    /// Measured tolerance: anisotropy spread + 2 relative CI of nu, scaled
    /// by the largest target distance, plus twice the replica scatter.
    pub epsilon_run: f64,
    pub metric_pass: bool,
    /// Mean of `mu_h([-1,1]^2)` over the mass replicas.
    pub mass_mean: f64,
    pub mass_replicas: usize,
    pub shift: f64,
}

/// Build `h = h_{0,beta} + f + (1/xi - Q) log beta - log(nu)/xi` and compare
/// its LFPP metric against the lattice `exp(xi f) d0` target; report the
/// deviation, a measured tolerance, and the GMC mass of `[-1,1]^2`.
pub fn flat_support_demo(
    constants: &LqgConstants,
    target_f: &Field,
    params: &FlatDemoParams,
    nu: &NuEstimate,
) -> Result<FlatDemoReport> {
    let spec = GridSpec::centered(params.grid_n, params.grid_n as f64 * params.spacing)?;
    if target_f.spec != spec {
        return Err(Error::config("target field must live on the demo grid"));
    }
    if !(nu.estimate > 0.0) {
        return Err(Error::precondition("nu estimate missing or nonpositive"));
    }
    let xi = constants.xi();
    let q = constants.q();
    let sign = if params.wrong_shift_sign { -1.0 } else { 1.0 };
    let shift = sign * ((1.0 / xi - q) * params.beta.ln() - nu.estimate.ln() / xi);
    let eps = default_mollification(&spec);

    // probe pairs inside [-1,1]^2, deterministic from the seed
    let mut rng = crate::rng::substream(params.seed, &[0xf1a7]);
    use rand::Rng;
    let mut pairs = Vec::new();
    while pairs.len() < params.pair_count {
        let a = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let b = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if a.dist(b) > 0.25 {
            pairs.push((a, b));
        }
    }
    let target_engine = DistanceEngine::new(target_f.clone(), xi, params.stencil, 1.0)?;
    let mut target_dists = Vec::new();
    for &(a, b) in &pairs {
        target_dists.push(target_engine.distance(a, b, &Region::Whole)?);
    }
    let max_target = target_dists.iter().fold(0.0f64, |m, &v| m.max(v));

    let deviations: Vec<f64> = (0..params.metric_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let slab = sample_slab_field(spec, 0.0, params.beta, params.seed ^ (0xf1a700 + r))
                .expect("slab sampling");
            let mut h = mollify(&slab, eps).expect("mollify");
            h.values = &h.values + &target_f.values;
            h.values.mapv_inplace(|v| v + shift);
            let engine = DistanceEngine::new(h, xi, params.stencil, 1.0).expect("engine");
            let mut worst: f64 = 0.0;
            for (&(a, b), &td) in pairs.iter().zip(target_dists.iter()) {
                let d = engine.distance(a, b, &Region::Whole).expect("distance");
                worst = worst.max((d - td).abs());
            }
            worst
        })
        .collect();
    let deviation_mean = mean(&deviations);
    let scatter = sample_variance(&deviations).sqrt();
    let aniso = params.stencil.anisotropy_bound() - 1.0;
    let rel_ci = nu.ci95.last().copied().unwrap_or(0.0) / nu.estimate;
    let epsilon_run = (aniso + 2.0 * rel_ci) * max_target + 2.0 * scatter;

    let masses: Vec<f64> = (0..params.mass_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let slab = sample_slab_field(spec, 0.0, params.beta, params.seed ^ (0x3a5500 + r))
                .expect("slab sampling");
            let mut h = slab;
            h.values = &h.values + &target_f.values;
            h.values.mapv_inplace(|v| v + shift);
            let m = gmc_cell_masses(&h, constants, eps).expect("gmc");
            measure_of_set(
                &m,
                &Region::rect(Point::new(-1.0, -1.0), Point::new(1.0, 1.0)),
            )
        })
        .collect();
    Ok(FlatDemoReport {
        beta: params.beta,
        seed: params.seed,
        nu_estimate: nu.estimate,
        nu_ci95: nu.ci95.last().copied().unwrap_or(f64::NAN),
        deviation_mean,
        deviations,
        epsilon_run,
        metric_pass: deviation_mean <= epsilon_run.max(1e-12),
        mass_mean: mean(&masses),
        mass_replicas: params.mass_replicas,
        shift,
    })
}

/// Matched time-constant estimate for a flat demo family: `h_{0,1}` on the
/// grid with spacing `spacing/beta`, scales sized to the demo pairs.
pub fn matched_nu_for_demo(
    constants: &LqgConstants,
    spacing_over_beta: f64,
    seed: u64,
    replicas: usize,
    stencil: Stencil,
) -> Result<NuEstimate> {
    estimate_nu(
        constants,
        &NuParams {
            scales: vec![16, 32, 64],
            replicas,
            direction: [1.0, 0.0],
            seed,
            grid_n: 176,
            spacing: spacing_over_beta,
            stencil,
            beta: 1.0,
        },
    )
}

// ---------------------------------------------------------------------------
// Sphere demo
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SphereDemoParams {
    pub grid_n: usize,
    pub spacing: f64,
    pub beta: f64,
    pub theta_bar: f64,
    pub seed: u64,
    pub stencil: Stencil,
    pub pair_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SphereDemoReport {
    pub beta: f64,
    pub theta_bar: f64,
    pub seed: u64,
    /// Max `|D - e^{xi g} d_S|` over bulk pairs.
    pub bulk_deviation: f64,
    /// D-diameters of boxes around the marked points 0 and 1, at two radii
    /// (eta, eta/2): each pair should decrease.
    pub near_zero_diameters: [f64; 2],
    pub near_one_diameters: [f64; 2],
    /// D-diameters of outer circles at two radii: decreasing toward infinity.
    pub outer_diameters: [f64; 2],
    pub outer_radii: [f64; 2],
    pub shift: f64,
}

/// Build the singular-field analog of the sphere construction
/// (`h_{0,beta}` + truncated log kernels at 0 and 1 - `(2Q - gamma) log_+`
/// + the deterministic shifted smooth part) and compare its metric against
/// the lattice `e^{xi g} d_S` in three regions: near the marked points, the
/// outer annulus, and the bulk.
pub fn sphere_demo(
    constants: &LqgConstants,
    target_g: &Field,
    params: &SphereDemoParams,
    nu: &NuEstimate,
) -> Result<SphereDemoReport> {
    let spec = GridSpec::centered(params.grid_n, params.grid_n as f64 * params.spacing)?;
    if target_g.spec != spec {
        return Err(Error::config("target field must live on the demo grid"));
    }
    let needed = 1.0 / params.theta_bar;
    if !spec.contains_disk(Point::ZERO, needed) {
        return Err(Error::config(format!(
            "grid must cover the ball of radius 1/theta_bar = {needed}"
        )));
    }
    let xi = constants.xi();
    let q = constants.q();
    let gamma = constants.gamma();
    let shift = (1.0 / xi - q) * params.beta.ln() - nu.estimate.ln() / xi;
    let eps = default_mollification(&spec);

    // spherical conformal correction: e^{xi f} = e^{xi g} * 2/(1+|z|^2)
    let spherical = Field::from_fn(spec, |p| (2.0 / (1.0 + p.norm_sq())).ln() / xi);
    let singular = Field::from_fn(spec, |p| {
        let f0 = crate::constants::truncated_green(params.theta_bar, p, Point::ZERO).unwrap();
        let f1 =
            crate::constants::truncated_green(params.theta_bar, p, Point::new(1.0, 0.0)).unwrap();
        gamma * (f0 + f1) - (2.0 * q - gamma) * crate::constants::log_plus(p)
    });

    let slab = sample_slab_field(spec, 0.0, params.beta, params.seed ^ 0x5fe8e)?;
    let mut h = mollify(&slab, eps)?;
    h.values = &h.values + &target_g.values;
    h.values = &h.values + &spherical.values;
    h.values = &h.values + &singular.values;
    h.values.mapv_inplace(|v| v + shift);
    let engine = DistanceEngine::new(h, xi, params.stencil, 1.0)?;

    let mut target_field = target_g.clone();
    target_field.values = &target_field.values + &spherical.values;
    let target_engine = DistanceEngine::new(target_field, xi, params.stencil, 1.0)?;

    // bulk pairs: away from 0, 1 and the outer annulus
    let mut rng = crate::rng::substream(params.seed, &[0x5fe8]);
    use rand::Rng;
    let mut bulk_deviation: f64 = 0.0;
    let mut used = 0;
    while used < params.pair_count {
        let a = Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let b = Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let clear = |p: Point| p.norm() > 0.4 && p.dist(Point::new(1.0, 0.0)) > 0.4;
        if !(clear(a) && clear(b)) || a.dist(b) < 0.5 {
            continue;
        }
        used += 1;
        let d = engine.distance(a, b, &Region::Whole)?;
        let t = target_engine.distance(a, b, &Region::Whole)?;
        bulk_deviation = bulk_deviation.max((d - t).abs());
    }

    // near-singularity diameters at two radii
    let ball_diam = |center: Point, radius: f64| -> Result<f64> {
        let region = Region::rect(
            Point::new(center.x - radius, center.y - radius),
            Point::new(center.x + radius, center.y + radius),
        );
        engine.diameter(&region, 8)
    };
    let eta = 0.3;
    let near_zero = [ball_diam(Point::ZERO, eta)?, ball_diam(Point::ZERO, eta / 2.0)?];
    let near_one = [
        ball_diam(Point::new(1.0, 0.0), eta)?,
        ball_diam(Point::new(1.0, 0.0), eta / 2.0)?,
    ];

    // outer-region diameters at two radii via circle probes
    let side = spec.side() / 2.0;
    let outer_radii = [0.55 * needed, 0.9 * needed];
    let mut outer = [0.0f64; 2];
    for (k, &rr) in outer_radii.iter().enumerate() {
        let mut probes = Vec::new();
        for t in 0..12 {
            let th = 2.0 * std::f64::consts::PI * t as f64 / 12.0;
            let p = Point::new(rr * th.cos(), rr * th.sin());
            if p.x.abs() < side - spec.spacing && p.y.abs() < side - spec.spacing {
                probes.push(p);
            }
        }
        let m = engine.distance_matrix(&probes, &Region::Whole)?;
        let mut worst: f64 = 0.0;
        for a in 0..probes.len() {
            for b in (a + 1)..probes.len() {
                worst = worst.max(m[a][b]);
            }
        }
        outer[k] = worst;
    }
    Ok(SphereDemoReport {
        beta: params.beta,
        theta_bar: params.theta_bar,
        seed: params.seed,
        bulk_deviation,
        near_zero_diameters: near_zero,
        near_one_diameters: near_one,
        outer_diameters: outer,
        outer_radii,
        shift,
    })
}
