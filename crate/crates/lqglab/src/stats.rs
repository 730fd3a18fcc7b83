//! Statistical laboratory: time-constant estimation, distributional scaling
//! checks, covariance/variance identities, and the Fourier conditioning
//! toolkit (band limiting, deconvolution, annulus bumps).
//!
//! Every report embeds sample counts and seeds; replica loops use
//! counter-based substreams and order-fixed reductions, so reruns are
//! bit-identical at any worker count.

use crate::constants::{self, LqgConstants};
use crate::error::{Error, Result};
use crate::fft;
use crate::field::{Field, GridSpec, Point};
use crate::metric::{DistanceEngine, Region, Stencil};
use crate::report::{ci95_half_width, mean, median, pairwise_sum, standard_error};
use crate::sampler::{circle_average, mollify, sample_slab_field};
use rayon::prelude::*;
use serde::Serialize;

/// Default mollification scale for building engines: twice the lattice step.
pub fn default_mollification(spec: &GridSpec) -> f64 {
    2.0 * spec.spacing
}

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Two-sample KS statistic with the asymptotic p-value
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsReport {
    let mut a: Vec<f64> = xs.to_vec();
    let mut b: Vec<f64> = ys.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = a[i];
        let y = b[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        let fa = i as f64 / n1 as f64;
        let fb = j as f64 / n2 as f64;
        d = d.max((fa - fb).abs());
    }
    let ne = (n1 as f64 * n2 as f64 / (n1 + n2) as f64).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    KsReport {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        n1,
        n2,
    }
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        sign = -sign;
        if term.abs() < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Time constant
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct NuEstimate {
    pub xi: f64,
    pub scales: Vec<usize>,
    /// Mean of `D(0, scale * e) / (scale * spacing * |e|)` per scale.
    pub means: Vec<f64>,
    pub ci95: Vec<f64>,
    pub direction: [f64; 2],
    pub replicas: usize,
    pub seed: u64,
    pub spacing: f64,
    pub grid_n: usize,
    /// Mean at the largest scale.
    pub estimate: f64,
}

#[derive(Debug, Clone)]
pub struct NuParams {
    pub scales: Vec<usize>,
    pub replicas: usize,
    pub direction: [f64; 2],
    pub seed: u64,
    pub grid_n: usize,
    pub spacing: f64,
    pub stencil: Stencil,
    /// Slab scale of the sampled field (`h_{0,beta}`, normally 1).
    pub beta: f64,
}

/// Estimate the first-passage time constant: Monte Carlo means of
/// `D_{h_{0,beta}}(0, n e)/(n |e| spacing)` per scale, with 95% CIs from
/// independent replicas. The estimate is the mean at the largest scale.
pub fn estimate_nu(constants: &LqgConstants, params: &NuParams) -> Result<NuEstimate> {
    if params.replicas == 0 {
        return Err(Error::config("estimate_nu needs at least one replica"));
    }
    if params.scales.is_empty() {
        return Err(Error::config("estimate_nu needs at least one scale"));
    }
    let spec = GridSpec::centered(params.grid_n, params.grid_n as f64 * params.spacing)?;
    let center = (params.grid_n / 2, params.grid_n / 2);
    let dn =
        (params.direction[0] * params.direction[0] + params.direction[1] * params.direction[1])
            .sqrt();
    if dn == 0.0 {
        return Err(Error::config("direction must be a nonzero vector"));
    }
    let dir = [params.direction[0] / dn, params.direction[1] / dn];
    let mut targets = Vec::new();
    let max_scale = *params.scales.iter().max().unwrap();
    for &s in &params.scales {
        let di = (s as f64 * dir[0]).round() as i64;
        let dj = (s as f64 * dir[1]).round() as i64;
        let ti = center.0 as i64 + di;
        let tj = center.1 as i64 + dj;
        let margin = (max_scale / 4).max(2) as i64;
        if ti < margin
            || tj < margin
            || ti >= params.grid_n as i64 - margin
            || tj >= params.grid_n as i64 - margin
        {
            return Err(Error::config(format!(
                "scale {s} along ({}, {}) does not fit the {} grid with margin {margin}",
                dir[0], dir[1], params.grid_n
            )));
        }
        targets.push((ti as usize, tj as usize));
    }
    let eps = default_mollification(&spec);
    let xi = constants.xi();
    let rows: Vec<Vec<f64>> = (0..params.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let h = sample_slab_field(spec, 0.0, params.beta, params.seed ^ (0xa1100 + r))
                .expect("slab sampling");
            let h = mollify(&h, eps).expect("mollify");
            let engine =
                DistanceEngine::new(h, xi, params.stencil, 1.0).expect("engine construction");
            let src = spec.node(center.0, center.1);
            let dsts: Vec<Point> = targets.iter().map(|&(i, j)| spec.node(i, j)).collect();
            let ds = engine
                .distances_from(src, &dsts, &Region::Whole)
                .expect("distances");
            ds.iter()
                .zip(targets.iter())
                .map(|(d, &(i, j))| d / spec.node(i, j).dist(src))
                .collect()
        })
        .collect();
    let mut means = Vec::new();
    let mut ci = Vec::new();
    for k in 0..params.scales.len() {
        let col: Vec<f64> = rows.iter().map(|row| row[k]).collect();
        means.push(mean(&col));
        ci.push(ci95_half_width(&col));
    }
    let estimate = *means.last().unwrap();
    Ok(NuEstimate {
        xi,
        scales: params.scales.clone(),
        means,
        ci95: ci,
        direction: dir,
        replicas: params.replicas,
        seed: params.seed,
        spacing: params.spacing,
        grid_n: params.grid_n,
        estimate,
    })
}

// ---------------------------------------------------------------------------
// Scaling law in law (matched discretizations)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ScalingLawReport {
    pub beta: f64,
    /// Exponent applied to `beta` in the comparison statistic (`xi Q` for
    /// the null hypothesis; deliberately wrong values test the power).
    pub exponent: f64,
    /// Exact lattice normalizer ratio `beta^{1 - xi Q}` relating the two
    /// matched discretizations (the continuum statement absorbs it into the
    /// `a_eps` normalizers).
    pub normalizer_ratio: f64,
    pub replicas: usize,
    pub seed: u64,
    pub ks: KsReport,
    pub sample_means: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct ScalingLawParams {
    pub grid_n: usize,
    /// Spacing of the `h_{0,beta}` grid; the `h_{0,1}` grid uses
    /// `spacing/beta` with the same node count (matched discretization).
    pub spacing: f64,
    /// Euclidean separation of the fixed test pair (`(-sep/2,0)` to `(sep/2,0)`).
    pub separation: f64,
    pub replicas: usize,
    pub seed: u64,
    pub stencil: Stencil,
}

/// Two-sample KS test of the rescaling identity: samples of
/// `D_{h_{0,beta}}(x,y)` against
/// `beta^e * beta^{1 - xi Q} * D_{h_{0,1}}(x/beta, y/beta)`
/// on the matched-discretization grid, with `e = xi Q` unless overridden.
pub fn check_scaling_law(
    constants: &LqgConstants,
    beta: f64,
    params: &ScalingLawParams,
    exponent_override: Option<f64>,
) -> Result<ScalingLawReport> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain(format!("beta must lie in (0,1], got {beta}")));
    }
    let xi_q = constants.xi() * constants.q();
    let exponent = exponent_override.unwrap_or(xi_q);
    let ratio = beta.powf(1.0 - xi_q);
    let spec1 = GridSpec::centered(params.grid_n, params.grid_n as f64 * params.spacing)?;
    let spec2 = GridSpec::centered(params.grid_n, params.grid_n as f64 * params.spacing / beta)?;
    if spec1.n != spec2.n {
        return Err(Error::config(
            "unmatched discretizations: both grids need the same node count",
        ));
    }
    let x = Point::new(-params.separation / 2.0, 0.0);
    let y = Point::new(params.separation / 2.0, 0.0);
    let xi = constants.xi();
    let moll1 = default_mollification(&spec1);
    let moll2 = default_mollification(&spec2);
    let replicas = params.replicas as u64;
    let seed = params.seed;
    let stencil = params.stencil;
    let side = |spec: GridSpec, slab_beta: f64, moll: f64, a: Point, b: Point| -> Vec<f64> {
        (0..replicas)
            .into_par_iter()
            .map(|r| {
                let h = sample_slab_field(spec, 0.0, slab_beta, seed ^ (0x5ca1e00 + r))
                    .expect("slab sampling");
                let h = mollify(&h, moll).expect("mollify");
                let engine = DistanceEngine::new(h, xi, stencil, 1.0).expect("engine");
                engine.distance(a, b, &Region::Whole).expect("distance")
            })
            .collect()
    };
    let a_samples = side(spec1, beta, moll1, x, y);
    let scale = beta.powf(exponent) * ratio;
    let b_samples: Vec<f64> = side(
        spec2,
        1.0,
        moll2,
        Point::new(x.x / beta, x.y / beta),
        Point::new(y.x / beta, y.y / beta),
    )
    .into_iter()
    .map(|d| scale * d)
    .collect();
    let ks = ks_two_sample(&a_samples, &b_samples);
    Ok(ScalingLawReport {
        beta,
        exponent,
        normalizer_ratio: ratio,
        replicas: params.replicas,
        seed: params.seed,
        ks,
        sample_means: [mean(&a_samples), mean(&b_samples)],
    })
}

// ---------------------------------------------------------------------------
// Maximal-lemma tail curve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TailCurve {
    pub lambdas: Vec<f64>,
    pub exceedance: Vec<f64>,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Log-log least-squares slope over the decaying part of the curve.
    pub fitted_slope: f64,
}

#[derive(Debug, Clone)]
pub struct TailParams {
    pub grid_n: usize,
    pub spacing: f64,
    pub horizon: f64,
    pub lambdas: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub stencil: Stencil,
}

/// Empirical exceedance of `sup_{1 < |x| <= X} D_{h_{0,1}}(0,x)/|x|`.
pub fn tail_statistic(constants: &LqgConstants, params: &TailParams) -> Result<TailCurve> {
    let spec = GridSpec::centered(params.grid_n, params.grid_n as f64 * params.spacing)?;
    if !spec.contains_disk(Point::ZERO, params.horizon) {
        return Err(Error::config("horizon exceeds the grid margin"));
    }
    let xi = constants.xi();
    let eps = default_mollification(&spec);
    let sups: Vec<f64> = (0..params.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let h = sample_slab_field(spec, 0.0, 1.0, params.seed ^ (0x7a1100 + r))
                .expect("slab sampling");
            let h = mollify(&h, eps).expect("mollify");
            let engine = DistanceEngine::new(h, xi, params.stencil, 1.0).expect("engine");
            let center = spec.node(spec.n / 2, spec.n / 2);
            let (dist, _) = engine.all_distances(center).expect("distances");
            let mut sup: f64 = 0.0;
            for i in 0..spec.n {
                for j in 0..spec.n {
                    let p = spec.node(i, j);
                    let rr = p.dist(center);
                    if rr > 1.0 && rr <= params.horizon {
                        let v = dist[i * spec.n + j];
                        if v.is_finite() {
                            sup = sup.max(v / rr);
                        }
                    }
                }
            }
            sup
        })
        .collect();
    let exceedance: Vec<f64> = params
        .lambdas
        .iter()
        .map(|&l| sups.iter().filter(|&&s| s > l).count() as f64 / params.replicas as f64)
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (l, p) in params.lambdas.iter().zip(exceedance.iter()) {
        if *p > 1.5 / params.replicas as f64 && *p < 0.9 {
            xs.push(l.ln());
            ys.push(p.ln());
        }
    }
    let fitted_slope = if xs.len() >= 2 {
        let mx = mean(&xs);
        let my = mean(&ys);
        let num: f64 = xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| (x - mx) * (y - my))
            .sum();
        let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        num / den
    } else {
        f64::NAN
    };
    Ok(TailCurve {
        lambdas: params.lambdas.clone(),
        exceedance,
        horizon: params.horizon,
        replicas: params.replicas,
        seed: params.seed,
        fitted_slope,
    })
}

// ---------------------------------------------------------------------------
// Covariance identity check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceCheck {
    pub alpha: f64,
    pub beta: f64,
    pub lags: Vec<f64>,
    pub empirical: Vec<f64>,
    pub analytic: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub pass: bool,
}

/// Empirical covariance of `h_{alpha,beta}` at the given lags (in cells,
/// along the x axis) against the analytic slab kernel; PASS iff every
/// z-score stays within 4.
pub fn empirical_covariance_check(
    spec: GridSpec,
    alpha: f64,
    beta: f64,
    lag_cells: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<CovarianceCheck> {
    let base = (spec.n / 4, spec.n / 2);
    let max_lag = *lag_cells.iter().max().unwrap_or(&0);
    if base.0 + max_lag >= spec.n {
        return Err(Error::config("largest lag leaves the grid"));
    }
    let products: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let h = sample_slab_field(spec, alpha, beta, seed ^ (0xc000 + r))
                .expect("slab sampling");
            let v0 = h.value_at(base.0, base.1);
            lag_cells
                .iter()
                .map(|&lag| v0 * h.value_at(base.0 + lag, base.1))
                .collect()
        })
        .collect();
    let mut empirical = Vec::new();
    let mut analytic = Vec::new();
    let mut ses = Vec::new();
    let mut zs = Vec::new();
    for (k, &lag) in lag_cells.iter().enumerate() {
        let col: Vec<f64> = products.iter().map(|row| row[k]).collect();
        let m = mean(&col);
        let se = standard_error(&col);
        let r = lag as f64 * spec.spacing;
        let a = if alpha == beta {
            0.0
        } else {
            constants::slab_kernel(alpha, beta, Point::new(r, 0.0)).unwrap_or(f64::NAN)
        };
        let z = if se == 0.0 {
            if (m - a).abs() == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (m - a) / se
        };
        empirical.push(m);
        analytic.push(a);
        ses.push(se);
        zs.push(z);
    }
    let pass = zs.iter().all(|z| z.abs() <= 4.0);
    Ok(CovarianceCheck {
        alpha,
        beta,
        lags: lag_cells.iter().map(|&l| l as f64 * spec.spacing).collect(),
        empirical,
        analytic,
        standard_errors: ses,
        z_scores: zs,
        replicas,
        seed,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Fourier variance identity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct VarianceFourierReport {
    pub beta: f64,
    pub empirical_var: f64,
    pub analytic_var: f64,
    pub z: f64,
    pub replicas: usize,
    pub seed: u64,
    pub pass: bool,
}

/// Check `Var(integral f h_{beta,inf})` against the Plancherel quadrature of
/// the tail spectral density against `|f_hat|^2`.
///
/// `test_fn` must have zero mean (so the integrand is finite at zero
/// frequency); the oracle integrates on a 4x zero-padded frequency grid, a
/// route independent of the sampler's lattice synthesis.
pub fn variance_fourier_check(
    test_fn: &Field,
    beta: f64,
    replicas: usize,
    seed: u64,
) -> Result<VarianceFourierReport> {
    let spec = test_fn.spec;
    let cell = spec.spacing * spec.spacing;
    let flat: Vec<f64> = test_fn.values.iter().copied().collect();
    let total = pairwise_sum(&flat) * cell;
    let l1: f64 = flat.iter().map(|v| v.abs()).sum::<f64>() * cell;
    if total.abs() > 1e-8 * l1.max(1e-30) {
        return Err(Error::precondition(format!(
            "test function must have zero mean; integral = {total:.3e}"
        )));
    }
    let samples: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let h = crate::sampler::sample_high_field(spec, beta, seed ^ (0xf000 + r))
                .expect("tail sampling");
            let prods: Vec<f64> = test_fn
                .values
                .iter()
                .zip(h.values.iter())
                .map(|(f, v)| f * v)
                .collect();
            pairwise_sum(&prods) * cell
        })
        .collect();
    let sq: Vec<f64> = samples.iter().map(|x| x * x).collect();
    let m = mean(&samples);
    let empirical_var = mean(&sq) - m * m;
    let analytic_var = tail_variance_quadrature(test_fn, beta, 4);
    // SE of a variance estimate for Gaussian samples: Var * sqrt(2/N)
    let se = analytic_var * (2.0 / replicas as f64).sqrt();
    let z = (empirical_var - analytic_var) / se;
    Ok(VarianceFourierReport {
        beta,
        empirical_var,
        analytic_var,
        z,
        replicas,
        seed,
        pass: z.abs() <= 4.0,
    })
}

/// Quadrature of `S_high(beta, zeta) |f_hat(zeta)|^2` over the plane, with
/// `f_hat` computed on a `pad`-times zero-padded grid (Riemann sum in
/// frequency space; the zero bin is skipped, its cell contribution being
/// finite and of order `1/(pad L)^2`).
pub fn tail_variance_quadrature(test_fn: &Field, beta: f64, pad: usize) -> f64 {
    let n = test_fn.spec.n;
    let np = n * pad;
    let l = test_fn.spec.side();
    let lp = l * pad as f64;
    let cell = test_fn.spec.spacing * test_fn.spec.spacing;
    let mut padded = ndarray::Array2::<num_complex::Complex64>::zeros((np, np));
    for i in 0..n {
        for j in 0..n {
            padded[[i, j]] = num_complex::Complex64::new(test_fn.values[[i, j]], 0.0);
        }
    }
    let hat = fft::fft2(&padded);
    let mut total = 0.0;
    let dzeta = 1.0 / (lp * lp);
    for i in 0..np {
        for j in 0..np {
            if i == 0 && j == 0 {
                continue;
            }
            let (zx, zy) = fft::bin_frequency(i, j, np, lp);
            let z = Point::new(zx, zy);
            let s = constants::spectral_density_high(beta, z).unwrap_or(0.0);
            let fh = hat[[i, j]].norm() * cell;
            total += s * fh * fh * dzeta;
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Circle-average variance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CircleAverageCheck {
    pub betas: Vec<f64>,
    pub empirical_var: Vec<f64>,
    pub analytic_var: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub monotone: bool,
    pub pass: bool,
}

/// Analytic `Var((h_{0,beta})_1(0))`: the double circle integral of the slab
/// kernel, reduced by symmetry to
/// `(1/pi) * integral_0^pi K_{0,beta}(2 sin(theta/2)) d theta`,
/// quadratured with a square-root substitution that absorbs the log
/// endpoint singularity.
pub fn circle_average_variance_analytic(beta: f64) -> f64 {
    let m = 4096;
    // theta = pi u^2, d theta = 2 pi u du; the integrand weight -> 0 at u = 0.
    let mut vals = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let u = k as f64 / m as f64;
        let theta = std::f64::consts::PI * u * u;
        let chord = 2.0 * (theta / 2.0).sin();
        let kern = if chord == 0.0 {
            0.0
        } else {
            constants::slab_kernel(0.0, beta, Point::new(chord, 0.0)).unwrap_or(0.0)
        };
        vals.push(kern * 2.0 * std::f64::consts::PI * u / m as f64);
    }
    let inner: f64 = pairwise_sum(&vals) - 0.5 * (vals[0] + vals[m]);
    inner / std::f64::consts::PI
}

/// Empirical vs analytic variance of the unit-circle average per `beta`
/// (betas increasing; the variance must increase along them).
pub fn circle_average_vanishing_check(
    spec: GridSpec,
    betas: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<CircleAverageCheck> {
    let mut empirical = Vec::new();
    let mut analytic = Vec::new();
    let mut zs = Vec::new();
    for (bi, &beta) in betas.iter().enumerate() {
        let avgs: Vec<f64> = (0..replicas as u64)
            .into_par_iter()
            .map(|r| {
                let h = sample_slab_field(spec, 0.0, beta, seed ^ ((bi as u64) << 32) ^ r)
                    .expect("slab sampling");
                circle_average(&h, Point::ZERO, 1.0).expect("circle average")
            })
            .collect();
        let sq: Vec<f64> = avgs.iter().map(|x| x * x).collect();
        let m = mean(&avgs);
        let var = mean(&sq) - m * m;
        let target = circle_average_variance_analytic(beta);
        let se = target * (2.0 / replicas as f64).sqrt();
        empirical.push(var);
        analytic.push(target);
        zs.push((var - target) / se);
    }
    let monotone = empirical.windows(2).all(|w| w[0] <= w[1]);
    let pass = zs.iter().all(|z| z.abs() <= 4.0);
    Ok(CircleAverageCheck {
        betas: betas.to_vec(),
        empirical_var: empirical,
        analytic_var: analytic,
        z_scores: zs,
        replicas,
        seed,
        monotone,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Band limiting and deconvolution
// ---------------------------------------------------------------------------

/// Multiply the spectrum by a radial C^2 cutoff: 1 inside `cutoff`, 0 beyond
/// `2*cutoff`, a smootherstep ramp between.
pub fn band_limit(f: &Field, cutoff: f64) -> Result<Field> {
    if !(cutoff > 0.0) {
        return Err(Error::domain("cutoff must be positive"));
    }
    let n = f.spec.n;
    let l = f.spec.side();
    let mut hat = fft::fft2(&fft::to_complex(&f.values));
    for i in 0..n {
        for j in 0..n {
            let (zx, zy) = fft::bin_frequency(i, j, n, l);
            let r = (zx * zx + zy * zy).sqrt();
            let chi = 1.0 - constants::smootherstep((r - cutoff) / cutoff);
            hat[[i, j]] *= chi;
        }
    }
    let vals = fft::ifft2_normalized(&hat);
    Ok(Field {
        spec: f.spec,
        values: fft::real_part(&vals),
        slab: f.slab,
        seed: f.seed,
        note: format!("band-limited at cutoff {cutoff}"),
    })
}

const DECONV_AMPLIFICATION_CAP: f64 = 1e12;

/// Maximum admissible band radius for deconvolving at scale `beta` with the
/// default amplification cap.
pub fn deconvolve_max_band(beta: f64) -> f64 {
    DECONV_AMPLIFICATION_CAP.ln().sqrt() / (std::f64::consts::PI * beta)
}

/// Invert heat-kernel mollification at scale `beta`: returns `phi` with
/// `mollify(phi, beta) = f` for band-limited `f`.
///
/// The inverse multiplier `exp(pi^2 beta^2 |zeta|^2)` is applied only where
/// it stays below 1e12; beyond that radius the spectrum is zeroed, keeping
/// the operator linear. The numerical band of `f` must fit inside the
/// admissible radius, otherwise the error names the largest usable cutoff.
pub fn deconvolve(f: &Field, beta: f64) -> Result<Field> {
    if !(beta > 0.0) {
        return Err(Error::domain("beta must be positive"));
    }
    let n = f.spec.n;
    let l = f.spec.side();
    let hat = fft::fft2(&fft::to_complex(&f.values));
    let max_mag = hat.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let admissible = deconvolve_max_band(beta);
    let mut band: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if hat[[i, j]].norm() > 1e-13 * max_mag {
                let (zx, zy) = fft::bin_frequency(i, j, n, l);
                band = band.max((zx * zx + zy * zy).sqrt());
            }
        }
    }
    if band > admissible {
        return Err(Error::precondition(format!(
            "band radius {band:.3} exceeds the admissible {admissible:.3} at beta = {beta} \
             (amplification cap 1e12); band-limit f to cutoff <= {:.3} first",
            admissible / 2.0
        )));
    }
    // Apply the inverse multiplier on the detected band only; beyond it the
    // spectrum is roundoff noise and amplifying it would drown the result.
    let band_edge = band * (1.0 + 1e-9);
    let mut out = hat;
    for i in 0..n {
        for j in 0..n {
            let (zx, zy) = fft::bin_frequency(i, j, n, l);
            let s2 = zx * zx + zy * zy;
            if s2.sqrt() <= band_edge {
                let gain = (std::f64::consts::PI.powi(2) * beta * beta * s2).exp();
                out[[i, j]] *= gain;
            } else {
                out[[i, j]] = num_complex::Complex64::new(0.0, 0.0);
            }
        }
    }
    let vals = fft::ifft2_normalized(&out);
    Ok(Field {
        spec: f.spec,
        values: fft::real_part(&vals),
        slab: crate::field::SlabRange::Deterministic,
        seed: None,
        note: format!("deconvolved at beta = {beta}"),
    })
}

// ---------------------------------------------------------------------------
// Annulus bump
// ---------------------------------------------------------------------------

/// Smooth field supported on the annulus `1 +- eta_bar`, equal to `K` on the
/// unit circle, with `eta_bar = min(beta^2 eta / (4|K|), 0.1)`; its
/// mollification at scale `beta` has sup norm below `eta` (construction
/// bound `4 K eta_bar / beta^2`).
pub fn annulus_bump(k: f64, eta: f64, beta: f64, spec: GridSpec) -> Result<Field> {
    if k == 0.0 {
        return Ok(Field::zeros(spec));
    }
    if !(eta > 0.0) || !(beta > 0.0) {
        return Err(Error::domain("eta and beta must be positive"));
    }
    let eta_bar = (beta * beta * eta / (4.0 * k.abs())).min(0.1);
    if eta_bar < 4.0 * spec.spacing {
        return Err(Error::config(format!(
            "annulus half-width {eta_bar:.3e} needs spacing <= {:.3e}",
            eta_bar / 4.0
        )));
    }
    if !spec.contains_disk(Point::ZERO, 1.0 + 2.0 * eta_bar) {
        return Err(Error::config("grid must contain the unit circle with margin"));
    }
    let field = Field::from_fn(spec, |p| {
        let t = (p.norm() - 1.0).abs() / eta_bar;
        k * (1.0 - constants::smootherstep(t))
    });
    Ok(Field {
        note: format!("annulus bump K={k}, eta_bar={eta_bar:.4e}"),
        ..field
    })
}

// ---------------------------------------------------------------------------
// a_eps estimation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AepsTable {
    pub eps: Vec<f64>,
    pub medians: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
}

/// Median of `D^eps(0, e1)` over replicas, per mollification scale, on
/// shared noise (the same field per replica across the sweep).
pub fn estimate_a_eps(
    constants: &LqgConstants,
    spec: GridSpec,
    eps_list: &[f64],
    replicas: usize,
    seed: u64,
    stencil: Stencil,
) -> Result<AepsTable> {
    let xi = constants.xi();
    let rows: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let h = sample_slab_field(spec, 0.0, 1.0, seed ^ (0xae500 + r))
                .expect("slab sampling");
            eps_list
                .iter()
                .map(|&eps| {
                    let m = mollify(&h, eps).expect("mollify");
                    let engine = DistanceEngine::new(m, xi, stencil, 1.0).expect("engine");
                    engine
                        .distance(Point::ZERO, Point::new(1.0, 0.0), &Region::Whole)
                        .expect("distance")
                })
                .collect()
        })
        .collect();
    let medians: Vec<f64> = (0..eps_list.len())
        .map(|k| {
            let col: Vec<f64> = rows.iter().map(|row| row[k]).collect();
            median(&col)
        })
        .collect();
    Ok(AepsTable {
        eps: eps_list.to_vec(),
        medians,
        replicas,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_basics() {
        let xs: Vec<f64> = (0..200).map(|k| k as f64 / 200.0).collect();
        let same = ks_two_sample(&xs, &xs);
        assert!(same.statistic < 1e-12);
        assert!(same.p_value > 0.99);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        let diff = ks_two_sample(&xs, &shifted);
        assert!(diff.p_value < 1e-6);
    }

    #[test]
    fn estimate_nu_smoke() {
        let c = LqgConstants::sqrt_8_3();
        let params = NuParams {
            scales: vec![8, 16],
            replicas: 40,
            direction: [1.0, 0.0],
            seed: 99,
            grid_n: 48,
            spacing: 0.25,
            stencil: Stencil::Eight,
            beta: 1.0,
        };
        let est = estimate_nu(&c, &params).unwrap();
        assert_eq!(est.scales, vec![8, 16]);
        assert!(est.means.iter().all(|&m| m > 0.0));
        assert!(est.estimate > 0.0);
        let est2 = estimate_nu(&c, &params).unwrap();
        assert_eq!(est.means, est2.means);
        let bad = NuParams {
            scales: vec![100],
            ..params
        };
        assert!(estimate_nu(&c, &bad).is_err());
    }

    #[test]
    fn scaling_law_beta_one_is_exact() {
        let c = LqgConstants::sqrt_8_3();
        let params = ScalingLawParams {
            grid_n: 48,
            spacing: 1.0 / 4.0,
            separation: 2.0,
            replicas: 12,
            seed: 5,
            stencil: Stencil::Eight,
        };
        let rep = check_scaling_law(&c, 1.0, &params, None).unwrap();
        assert!(rep.ks.statistic < 1e-12, "beta=1 must match exactly");
        assert_eq!(rep.normalizer_ratio, 1.0);
    }

    #[test]
    fn covariance_check_zero_slab() {
        let spec = GridSpec::centered(32, 4.0).unwrap();
        let rep = empirical_covariance_check(spec, 0.4, 0.4, &[0, 2, 5], 20, 1).unwrap();
        assert!(rep.pass);
        assert!(rep.empirical.iter().all(|&v| v == 0.0));
        assert!(rep.analytic.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_check_small_run() {
        let spec = GridSpec::centered(128, 8.0).unwrap();
        let rep = empirical_covariance_check(spec, 0.5, 1.0, &[0, 8, 16], 400, 7).unwrap();
        assert!((rep.analytic[0] - 2.0f64.ln()).abs() < 1e-12);
        assert!(rep.pass, "z-scores {:?}", rep.z_scores);
    }

    #[test]
    fn band_limit_properties() {
        let spec = GridSpec::centered(64, 4.0).unwrap();
        let f = Field::from_fn(spec, |p| (2.0 * std::f64::consts::PI * p.x).sin());
        let g = band_limit(&f, 20.0).unwrap();
        for (a, b) in f.values.iter().zip(g.values.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let g = band_limit(&f, 0.1).unwrap();
        assert!(g.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn deconvolve_roundtrip_and_linearity() {
        let spec = GridSpec::centered(128, 8.0).unwrap();
        let beta = 0.5;
        let raw = Field::from_fn(spec, |p| {
            let a = (-(p - Point::new(0.5, 0.0)).norm_sq() / 0.5).exp();
            let b = (-(p + Point::new(0.5, 0.0)).norm_sq() / 0.5).exp();
            a - b
        });
        let f = band_limit(&raw, 1.0).unwrap();
        let phi = deconvolve(&f, beta).unwrap();
        let back = mollify(&phi, beta).unwrap();
        let mut worst: f64 = 0.0;
        for (a, b) in back.values.iter().zip(f.values.iter()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst <= 1e-8, "roundtrip error {worst}");
        // linearity
        let g = band_limit(
            &Field::from_fn(spec, |p| (-(p.norm_sq()) / 0.3).exp() * p.x),
            1.0,
        )
        .unwrap();
        let mut combo = f.clone();
        combo.values = &f.values * 2.0 + &g.values * (-0.5);
        let lhs = deconvolve(&combo, beta).unwrap();
        let pf = deconvolve(&f, beta).unwrap();
        let pg = deconvolve(&g, beta).unwrap();
        let scale = lhs.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for ((l, a), b) in lhs.values.iter().zip(pf.values.iter()).zip(pg.values.iter()) {
            assert!((l - (2.0 * a - 0.5 * b)).abs() < 1e-10 * scale.max(1.0));
        }
        // the heat kernel deconvolves to a near-delta
        let kernel = Field::from_fn(spec, |p| {
            crate::constants::heat_kernel(beta * beta / 2.0, p).unwrap()
        });
        let kb = band_limit(&kernel, 1.2).unwrap();
        let delta = deconvolve(&kb, beta).unwrap();
        // a band-limited delta: global max at the origin cell, fast decay
        let (i0, j0) = spec.snap(Point::ZERO).unwrap();
        let peak = delta.value_at(i0, j0);
        let mut far_max: f64 = 0.0;
        for i in 0..spec.n {
            for j in 0..spec.n {
                let v = delta.value_at(i, j).abs();
                assert!(v <= peak * (1.0 + 1e-12), "peak not at the origin");
                if spec.node(i, j).norm() > 1.5 {
                    far_max = far_max.max(v);
                }
            }
        }
        assert!(far_max < 0.05 * peak, "far tail {far_max} vs peak {peak}");
        // over-wide band errors out naming the admissible cutoff
        let sharp = Field::from_fn(spec, |p| if p.norm() < 0.1 { 1.0 } else { 0.0 });
        let err = deconvolve(&sharp, 2.0).unwrap_err();
        assert!(err.to_string().contains("band"));
    }

    #[test]
    fn annulus_bump_contract() {
        let spec = GridSpec::centered(384, 3.0).unwrap();
        let (k, eta, beta) = (3.0, 2.0, 0.5);
        let psi = annulus_bump(k, eta, beta, spec).unwrap();
        let avg = circle_average(&psi, Point::ZERO, 1.0).unwrap();
        // bilinear sampling of the cubic-flat crest: error O((spacing/eta_bar)^3)
        let eta_bar = beta * beta * eta / (4.0 * k);
        let quad_tol = 20.0 * k * (spec.spacing / eta_bar).powi(3);
        assert!((avg - k).abs() < quad_tol, "avg {avg} (tol {quad_tol})");
        let m = mollify(&psi, beta).unwrap();
        let sup = m.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(sup < eta, "sup {sup} !< {eta}");
        let z = annulus_bump(0.0, eta, beta, spec).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let coarse = GridSpec::centered(16, 3.0).unwrap();
        assert!(annulus_bump(k, eta, beta, coarse).is_err());
    }

    #[test]
    fn stationarity_and_isotropy_of_slab_field() {
        // Cov(h(z), h(z+v)) depends only on v (3 base points), and matches
        // the analytic kernel along both axis and diagonal lags.
        let spec = GridSpec::centered(64, 8.0).unwrap();
        let reps = 500usize;
        let bases = [(16, 16), (32, 24), (20, 40)];
        let shift = 8usize;
        let mut axis = vec![Vec::new(); bases.len()];
        let mut diag = vec![Vec::new(); bases.len()];
        for r in 0..reps {
            let h = sample_slab_field(spec, 0.0, 0.5, 9000 + r as u64).unwrap();
            for (k, &(i, j)) in bases.iter().enumerate() {
                axis[k].push(h.value_at(i, j) * h.value_at(i + shift, j));
                diag[k].push(h.value_at(i, j) * h.value_at(i + shift / 2, j + shift / 2));
            }
        }
        let m0 = mean(&axis[0]);
        for k in 1..bases.len() {
            let mk = mean(&axis[k]);
            let se = (standard_error(&axis[0]).powi(2) + standard_error(&axis[k]).powi(2)).sqrt();
            assert!((m0 - mk).abs() <= 4.0 * se, "stationarity {m0} vs {mk}");
        }
        let r_axis = shift as f64 * spec.spacing;
        let r_diag = (shift as f64 / 2.0) * std::f64::consts::SQRT_2 * spec.spacing;
        let k_axis = constants::slab_kernel(0.0, 0.5, Point::new(r_axis, 0.0)).unwrap();
        let k_diag = constants::slab_kernel(0.0, 0.5, Point::new(r_diag, 0.0)).unwrap();
        assert!((mean(&axis[0]) - k_axis).abs() <= 4.0 * standard_error(&axis[0]));
        assert!((mean(&diag[0]) - k_diag).abs() <= 4.0 * standard_error(&diag[0]));
    }

    #[test]
    fn point_scaling_law_ks() {
        // h_{0, beta/2}(z/2) vs h_{0,beta}(z): two-sample KS at p > 0.01.
        let spec1 = GridSpec::centered(64, 8.0).unwrap();
        let spec2 = GridSpec::centered(64, 4.0).unwrap();
        let reps = 400;
        let z = Point::new(1.0, 0.5);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in 0..reps {
            let a = sample_slab_field(spec1, 0.0, 1.0, 100_000 + r).unwrap();
            let (i, j) = spec1.snap(z).unwrap();
            xs.push(a.value_at(i, j));
            let b = sample_slab_field(spec2, 0.0, 0.5, 200_000 + r).unwrap();
            let (i, j) = spec2.snap(Point::new(z.x / 2.0, z.y / 2.0)).unwrap();
            ys.push(b.value_at(i, j));
        }
        let ks = ks_two_sample(&xs, &ys);
        assert!(ks.p_value > 0.01, "p = {}", ks.p_value);
    }

    #[test]
    fn circle_average_variance_analytic_matches_mc() {
        let spec = GridSpec::centered(128, 8.0).unwrap();
        let rep = circle_average_vanishing_check(spec, &[0.25, 0.5], 400, 17).unwrap();
        assert!(rep.pass, "z-scores {:?}", rep.z_scores);
        assert!(rep.monotone, "variances {:?}", rep.empirical_var);
    }
}
