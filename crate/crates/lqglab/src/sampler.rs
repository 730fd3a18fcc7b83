//! Sampling of white-noise slab fields `h_{alpha,beta}`, smooth tails
//! `h_{beta,infinity}`, the composed whole-plane field, and the singular
//! fields built from them; plus mollification and circle averages.
//!
//! Sampling is periodic spectral synthesis: one independent complex Gaussian
//! per lattice frequency, scaled by the square root of the analytic spectral
//! density, inverse-transformed. On an `n`-grid of side `L` this draws
//! exactly from the periodization of the target covariance, so acceptance
//! tests keep lags and slab widths below `L/8` where wrap-around is far
//! below Monte Carlo noise.

use crate::constants::{self, LqgConstants};
use crate::error::{Error, Result};
use crate::fft;
use crate::field::{Field, GridSpec, Point, SlabRange};
use crate::rng::substream;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Independent Gaussian slab arrays on a shared scale ladder, realizing the
/// white-noise coupling: summing bands reproduces coarser fields exactly.
#[derive(Debug, Clone)]
pub struct WhiteNoiseSlabs {
    pub spec: GridSpec,
    /// Increasing slab boundaries in mollification-scale units
    /// (`levels[k]` is a `beta` value; band `k` spans `levels[k]..levels[k+1]`).
    pub levels: Vec<f64>,
    pub bands: Vec<Array2<f64>>,
    pub seed: u64,
}

/// Draw a real stationary Gaussian field with spectral density `density`.
///
/// `density(zeta)` must be the plane density; bin `(j,k)` receives variance
/// `density(zeta_jk)/L^2`. `include_zero_mode = false` pins the constant
/// mode to zero (mandatory for the tail field, whose density diverges).
fn synthesize(
    spec: GridSpec,
    density: impl Fn(Point) -> f64,
    include_zero_mode: bool,
    rng: &mut impl Rng,
) -> Array2<f64> {
    let n = spec.n;
    let l = spec.side();
    let mut modes = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            // Draws happen for every bin in fixed order so the stream
            // layout does not depend on which bins are active.
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            if j == 0 && k == 0 && !include_zero_mode {
                continue;
            }
            let (zx, zy) = fft::bin_frequency(j, k, n, l);
            let s = density(Point::new(zx, zy));
            if s <= 0.0 {
                continue;
            }
            let amp = (s / (l * l)).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
            modes[[j, k]] = Complex64::new(re * amp, im * amp);
        }
    }
    let x = fft::ifft2(&modes);
    // h = sqrt(2) * Re(X) has exactly the periodized covariance.
    x.mapv(|v| std::f64::consts::SQRT_2 * v.re)
}

fn check_band_fits(spec: GridSpec, beta: f64) -> Result<()> {
    let max_beta = spec.side() / 8.0;
    if beta > max_beta {
        return Err(Error::config(format!(
            "slab scale beta = {beta} exceeds side/8 = {max_beta}; enlarge the box to at least {} units",
            8.0 * beta
        )));
    }
    Ok(())
}

/// Sample `h_{alpha,beta}` on the lattice.
///
/// The result is tagged with its slab and seed; identical inputs give
/// bit-identical fields.
pub fn sample_slab_field(spec: GridSpec, alpha: f64, beta: f64, seed: u64) -> Result<Field> {
    if alpha < 0.0 || beta < alpha {
        return Err(Error::domain(format!(
            "need 0 <= alpha <= beta, got ({alpha}, {beta})"
        )));
    }
    if !beta.is_finite() {
        return Err(Error::domain(
            "use sample_high_field for the beta..infinity tail",
        ));
    }
    check_band_fits(spec, beta)?;
    let values = if alpha == beta {
        Array2::zeros((spec.n, spec.n))
    } else {
        let mut rng = substream(seed, &[0x51ab, alpha.to_bits(), beta.to_bits()]);
        let density = |z: Point| {
            let lo = constants::spectral_density_low(beta, z).unwrap_or(0.0);
            let hi = if alpha > 0.0 {
                constants::spectral_density_low(alpha, z).unwrap_or(0.0)
            } else {
                0.0
            };
            (lo - hi).max(0.0)
        };
        synthesize(spec, density, true, &mut rng)
    };
    Ok(Field {
        spec,
        values,
        slab: SlabRange::band(alpha, beta),
        seed: Some(seed),
        note: "spectral synthesis; zero mode carries its finite slab variance".into(),
    })
}

/// Sample one independent Gaussian band per interval of `levels`.
///
/// Bands use distinct counter-based substreams of `seed`, so any contiguous
/// sum of bands is both reproducible and independent of disjoint sums.
pub fn sample_white_noise_slabs(spec: GridSpec, levels: &[f64], seed: u64) -> Result<WhiteNoiseSlabs> {
    if levels.len() < 2 {
        return Err(Error::config("need at least two slab boundaries"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] < 0.0 {
        return Err(Error::config("slab boundaries must be nonnegative and increasing"));
    }
    let top = *levels.last().unwrap();
    check_band_fits(spec, top)?;
    let mut bands = Vec::with_capacity(levels.len() - 1);
    for (idx, w) in levels.windows(2).enumerate() {
        let (alpha, beta) = (w[0], w[1]);
        let mut rng = substream(seed, &[0x57ab, idx as u64]);
        let density = |z: Point| {
            let lo = constants::spectral_density_low(beta, z).unwrap_or(0.0);
            let hi = if alpha > 0.0 {
                constants::spectral_density_low(alpha, z).unwrap_or(0.0)
            } else {
                0.0
            };
            (lo - hi).max(0.0)
        };
        bands.push(synthesize(spec, density, true, &mut rng));
    }
    Ok(WhiteNoiseSlabs {
        spec,
        levels: levels.to_vec(),
        bands,
        seed,
    })
}

/// Geometric scale ladder `beta0 * 2^k` (time boundaries `t = beta^2` then
/// form the ladder `t0 * 4^k`), prefixed with 0.
pub fn geometric_levels(beta0: f64, count: usize) -> Vec<f64> {
    let mut levels = vec![0.0];
    for k in 0..count {
        levels.push(beta0 * (1u64 << k) as f64);
    }
    levels
}

/// Assemble `h_{alpha,beta}` from a shared slab ladder by summing bands.
///
/// `alpha` and `beta` must coincide with ladder boundaries; for fixed slabs
/// the fields over disjoint ranges are independent and
/// `field(0,b2) = field(0,b1) + field(b1,b2)` holds exactly.
pub fn sample_slab_field_nested(slabs: &WhiteNoiseSlabs, alpha: f64, beta: f64) -> Result<Field> {
    let find = |v: f64| -> Result<usize> {
        slabs
            .levels
            .iter()
            .position(|&b| (b - v).abs() <= 1e-12 * v.max(1.0))
            .ok_or_else(|| {
                Error::config(format!(
                    "scale {v} is not a boundary of the slab ladder {:?}",
                    slabs.levels
                ))
            })
    };
    let i = find(alpha)?;
    let j = find(beta)?;
    if j < i {
        return Err(Error::config("need alpha <= beta on the ladder"));
    }
    let mut values = Array2::zeros((slabs.spec.n, slabs.spec.n));
    for band in &slabs.bands[i..j] {
        values += band;
    }
    Ok(Field {
        spec: slabs.spec,
        values,
        slab: SlabRange::band(alpha, beta),
        seed: Some(slabs.seed),
        note: format!("nested sum of ladder bands {i}..{j}"),
    })
}

/// Sample the smooth tail `h_{beta,infinity}`.
///
/// The zero mode is pinned to 0 (the tail exists only modulo an additive
/// constant) and the result is shifted so its circle average on the unit
/// circle vanishes exactly, matching the whole-plane coupling.
pub fn sample_high_field(spec: GridSpec, beta: f64, seed: u64) -> Result<Field> {
    if beta <= 0.0 {
        return Err(Error::domain(format!("need beta > 0, got {beta}")));
    }
    if !spec.contains_disk(Point::ZERO, 1.0 + beta) {
        return Err(Error::config(format!(
            "grid must contain the unit circle with margin beta = {beta}"
        )));
    }
    let mut rng = substream(seed, &[0x416b, beta.to_bits()]);
    let density = |z: Point| constants::spectral_density_high(beta, z).unwrap_or(0.0);
    let values = synthesize(spec, density, false, &mut rng);
    let mut field = Field {
        spec,
        values,
        slab: SlabRange::band(beta, f64::INFINITY),
        seed: Some(seed),
        note: String::new(),
    };
    let avg = circle_average(&field, Point::ZERO, 1.0)?;
    field.values.mapv_inplace(|v| v - avg);
    field.note = format!("zero mode pinned; circle average on |z|=1 removed ({avg:.3e})");
    Ok(field)
}

/// `h = h_{0,beta} + h_{beta,infinity} - (h_{0,beta})_1(0)`.
pub fn compose_whole_plane(low: &Field, high: &Field) -> Result<Field> {
    if low.spec != high.spec {
        return Err(Error::config("compose_whole_plane needs matching grid specs"));
    }
    let beta = match (low.slab, high.slab) {
        (SlabRange::Band { alpha: 0.0, beta: b1 }, SlabRange::Band { alpha: b2, beta })
            if beta == f64::INFINITY && (b1 - b2).abs() <= 1e-12 * b1.max(1.0) =>
        {
            b1
        }
        _ => {
            return Err(Error::config(
                "compose_whole_plane needs slabs (0,beta) and (beta,infinity)",
            ))
        }
    };
    let low_avg = circle_average(low, Point::ZERO, 1.0)?;
    let mut values = &low.values + &high.values;
    values.mapv_inplace(|v| v - low_avg);
    Ok(Field {
        spec: low.spec,
        values,
        slab: SlabRange::band(0.0, f64::INFINITY),
        seed: low.seed,
        note: format!("whole-plane composition at beta = {beta}; (h_low)_1(0) removed"),
    })
}

/// Circle average `(g)_r(center)`: trapezoidal quadrature of the bilinear
/// interpolant over at least `max(64, ceil(4 pi r / spacing))` angles.
pub fn circle_average(field: &Field, center: Point, r: f64) -> Result<f64> {
    if r < 2.0 * field.spec.spacing {
        return Err(Error::config(format!(
            "circle radius {r} below twice the spacing {}",
            field.spec.spacing
        )));
    }
    if !field.spec.contains_disk(center, r) {
        return Err(Error::config("circle leaves the grid"));
    }
    let m = ((4.0 * std::f64::consts::PI * r / field.spec.spacing).ceil() as usize).max(64);
    let mut sum = 0.0;
    for k in 0..m {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        sum += field.interp(center + Point::new(r * theta.cos(), r * theta.sin()));
    }
    Ok(sum / m as f64)
}

/// Heat-kernel mollification `h_eps = p_{eps^2/2} * h` by circular
/// convolution, implemented as the frequency-domain multiplier
/// `exp(-pi^2 eps^2 |zeta|^2)` (unit mass, exact semigroup).
pub fn mollify(field: &Field, eps: f64) -> Result<Field> {
    if eps < field.spec.spacing {
        return Err(Error::config(format!(
            "mollification scale {eps} below the lattice spacing {}",
            field.spec.spacing
        )));
    }
    let n = field.spec.n;
    let l = field.spec.side();
    let mut hat = fft::fft2(&fft::to_complex(&field.values));
    for j in 0..n {
        for k in 0..n {
            let (zx, zy) = fft::bin_frequency(j, k, n, l);
            let s2 = zx * zx + zy * zy;
            let mult = (-std::f64::consts::PI.powi(2) * eps * eps * s2).exp();
            hat[[j, k]] *= mult;
        }
    }
    let vals = fft::ifft2_normalized(&hat);
    Ok(Field {
        spec: field.spec,
        values: fft::real_part(&vals),
        slab: field.slab,
        seed: field.seed,
        note: format!("{}; mollified at eps = {eps}", field.note),
    })
}

/// Which deterministic log-singularity profile to add.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularityStyle {
    /// `h - (2Q - gamma) log_+|z|`
    H1,
    /// `h + gamma G(0,z) + gamma G(1,z) - (2Q - gamma) log_+|z|`
    HL,
}

/// Add the deterministic singular profile of `h^1` or `h_L` pointwise.
///
/// Within half a cell of a marked point the log kernel is evaluated at the
/// clamped distance `max(|z - z0|, spacing/2)`; the clamp is recorded in the
/// field note.
pub fn add_log_singularities(
    field: &Field,
    constants: &LqgConstants,
    style: SingularityStyle,
) -> Result<Field> {
    let spec = field.spec;
    if style == SingularityStyle::HL {
        for marked in [Point::ZERO, Point::new(1.0, 0.0)] {
            if !spec.contains_disk(marked, spec.spacing) {
                return Err(Error::config(format!(
                    "grid must contain the marked point ({}, {}) in its interior",
                    marked.x, marked.y
                )));
            }
        }
    }
    let two_q_minus_gamma = 2.0 * constants.q() - constants.gamma();
    let gamma = constants.gamma();
    let clamp = spec.spacing / 2.0;
    let mut out = field.clone();
    for i in 0..spec.n {
        for j in 0..spec.n {
            let z = spec.node(i, j);
            let mut profile = -two_q_minus_gamma * constants::log_plus(z);
            if style == SingularityStyle::HL {
                // G(z0, z) with the |z - z0| denominator clamped at half a cell.
                for z0 in [Point::ZERO, Point::new(1.0, 0.0)] {
                    let d = z.dist(z0).max(clamp);
                    profile += gamma * (z.norm().max(1.0) / d).ln();
                }
            }
            out.values[[i, j]] += profile;
        }
    }
    out.note = format!(
        "{}; {} profile added (singularity clamp {clamp:.3e})",
        out.note,
        match style {
            SingularityStyle::H1 => "h1",
            SingularityStyle::HL => "hL",
        }
    );
    Ok(out)
}

/// Subtract `(1/gamma) log(total_mass)` uniformly, returning the shifted
/// field and the unnormalized importance weight `total_mass^{4/gamma^2 - 2}`.
pub fn unit_area_normalize(
    field: &Field,
    total_mass: f64,
    constants: &LqgConstants,
) -> Result<(Field, f64)> {
    if !(total_mass > 0.0) {
        return Err(Error::precondition(format!(
            "total mass must be positive, got {total_mass}"
        )));
    }
    let gamma = constants.gamma();
    let shifted = field.shift(-(total_mass.ln()) / gamma);
    let weight = total_mass.powf(4.0 / (gamma * gamma) - 2.0);
    Ok((shifted, weight))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec64() -> GridSpec {
        GridSpec::centered(64, 8.0).unwrap()
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let spec = spec64();
        let a = sample_slab_field(spec, 0.5, 1.0, 11).unwrap();
        let b = sample_slab_field(spec, 0.5, 1.0, 11).unwrap();
        let c = sample_slab_field(spec, 0.5, 1.0, 12).unwrap();
        assert_eq!(a.values, b.values);
        let differing = a
            .values
            .iter()
            .zip(c.values.iter())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing > spec.n * spec.n - 4);
    }

    #[test]
    fn empty_slab_is_zero() {
        let f = sample_slab_field(spec64(), 0.7, 0.7, 5).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oversized_beta_is_rejected() {
        let err = sample_slab_field(spec64(), 0.0, 2.0, 5).unwrap_err();
        assert!(err.to_string().contains("side/8"));
    }

    #[test]
    fn pointwise_variance_matches_kernel() {
        // Var h_{0.5,1}(0) = log 2, checked to 4 standard errors.
        let spec = spec64();
        let reps = 600;
        let mut sum_sq = 0.0;
        for r in 0..reps {
            let f = sample_slab_field(spec, 0.5, 1.0, 1000 + r).unwrap();
            let v = f.value_at(spec.n / 2, spec.n / 2);
            sum_sq += v * v;
        }
        let var = sum_sq / reps as f64;
        let target = 2.0f64.ln();
        let se = target * (2.0 / reps as f64).sqrt();
        assert!(
            (var - target).abs() < 4.0 * se,
            "var {var} vs {target} (se {se})"
        );
    }

    #[test]
    fn nested_slabs_telescope_exactly() {
        let spec = spec64();
        let levels = geometric_levels(0.25, 3); // 0, 0.25, 0.5, 1.0
        let slabs = sample_white_noise_slabs(spec, &levels, 3).unwrap();
        let whole = sample_slab_field_nested(&slabs, 0.0, 1.0).unwrap();
        let a = sample_slab_field_nested(&slabs, 0.0, 0.5).unwrap();
        let b = sample_slab_field_nested(&slabs, 0.5, 1.0).unwrap();
        let sum = a.add(&b).unwrap();
        assert_eq!(whole.values, sum.values);
        assert!(sample_slab_field_nested(&slabs, 0.0, 0.3).is_err());
    }

    #[test]
    fn disjoint_slabs_uncorrelated() {
        let spec = spec64();
        let levels = geometric_levels(0.25, 3);
        let reps = 500;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for r in 0..reps {
            let slabs = sample_white_noise_slabs(spec, &levels, 50 + r).unwrap();
            let a = sample_slab_field_nested(&slabs, 0.0, 0.25).unwrap();
            let b = sample_slab_field_nested(&slabs, 0.5, 1.0).unwrap();
            let x = a.value_at(10, 20);
            let y = b.value_at(10, 20);
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 4.0 / (reps as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn high_field_circle_average_vanishes() {
        let spec = GridSpec::centered(128, 8.0).unwrap();
        let f = sample_high_field(spec, 0.5, 9).unwrap();
        let avg = circle_average(&f, Point::ZERO, 1.0).unwrap();
        assert!(avg.abs() < 1e-8, "avg {avg}");
    }

    #[test]
    fn high_field_variance_monotone_in_beta() {
        let spec = GridSpec::centered(128, 8.0).unwrap();
        let reps = 300;
        let var_at = |beta: f64| {
            let mut s = 0.0;
            for r in 0..reps {
                let f = sample_high_field(spec, beta, 300 + r).unwrap();
                let v = f.value_at(40, 90);
                s += v * v;
            }
            s / reps as f64
        };
        let v1 = var_at(0.4);
        let v2 = var_at(0.8);
        assert!(v1 > v2, "Var(beta=0.4) = {v1} should exceed Var(beta=0.8) = {v2}");
    }

    #[test]
    fn compose_whole_plane_normalization() {
        let spec = GridSpec::centered(128, 8.0).unwrap();
        let low = sample_slab_field(spec, 0.0, 0.5, 21).unwrap();
        let high = sample_high_field(spec, 0.5, 22).unwrap();
        let h = compose_whole_plane(&low, &high).unwrap();
        let avg = circle_average(&h, Point::ZERO, 1.0).unwrap();
        assert!(avg.abs() < 1e-8, "avg {avg}");
        // degenerate low field: result equals high
        let zero_low = Field {
            slab: SlabRange::band(0.0, 0.5),
            ..Field::zeros(spec)
        };
        let same = compose_whole_plane(&zero_low, &high).unwrap();
        assert_eq!(same.values, high.values);
        // mismatched slabs rejected
        let bad = sample_slab_field(spec, 0.0, 0.25, 21).unwrap();
        assert!(compose_whole_plane(&bad, &high).is_err());
    }

    #[test]
    fn circle_average_exactness() {
        let spec = GridSpec::centered(256, 4.0).unwrap();
        let c = Field::constant(spec, 3.25);
        assert_eq!(circle_average(&c, Point::ZERO, 1.0).unwrap(), 3.25);
        let lin = Field::from_fn(spec, |p| p.x);
        let a = circle_average(&lin, Point::new(0.3, -0.2), 1.0).unwrap();
        assert!((a - 0.3).abs() < 1e-10, "a = {a}");
        let quad = Field::from_fn(spec, |p| p.norm_sq());
        let r = 1.0;
        let v = circle_average(&quad, Point::ZERO, r).unwrap();
        assert!((v - r * r).abs() < 2.0 * spec.spacing * spec.spacing, "v = {v}");
        assert!(circle_average(&c, Point::ZERO, spec.spacing).is_err());
        assert!(circle_average(&c, Point::new(1.9, 0.0), 1.0).is_err());
    }

    #[test]
    fn mollify_semigroup_and_mass() {
        let spec = GridSpec::centered(64, 4.0).unwrap();
        let c = Field::constant(spec, -1.5);
        let m = mollify(&c, 0.25).unwrap();
        for v in m.values.iter() {
            assert!((v + 1.5).abs() < 1e-12);
        }
        let f = sample_slab_field(spec, 0.0, 0.5, 77).unwrap();
        let a = mollify(&mollify(&f, 0.25).unwrap(), 0.3).unwrap();
        let b = mollify(&f, (0.25f64 * 0.25 + 0.3 * 0.3).sqrt()).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!((x - y).abs() < 1e-8);
        }
        assert!(mollify(&f, spec.spacing / 2.0).is_err());
    }

    #[test]
    fn mollified_variance_grows_logarithmically() {
        // Var h_eps at the center grows like log(1/eps) + O(1): successive
        // differences across eps in {8d, 16d, 32d} are within 4 SE of log 2.
        let spec = GridSpec::centered(256, 8.0).unwrap();
        let d = spec.spacing;
        let reps = 400;
        let mut vars = [0.0f64; 3];
        for (k, eps) in [8.0 * d, 16.0 * d, 32.0 * d].into_iter().enumerate() {
            let mut s = 0.0;
            for r in 0..reps {
                let f = sample_slab_field(spec, 0.0, 1.0, 7000 + r).unwrap();
                let m = mollify(&f, eps).unwrap();
                let v = m.value_at(spec.n / 2, spec.n / 2);
                s += v * v;
            }
            vars[k] = s / reps as f64;
        }
        let ln2 = 2.0f64.ln();
        for w in vars.windows(2) {
            let diff = w[0] - w[1];
            let se = (w[0] + w[1]) * (2.0 / reps as f64).sqrt();
            assert!(
                (diff - ln2).abs() < 4.0 * se,
                "variance step {diff} vs log 2 (se {se}), vars {vars:?}"
            );
        }
    }

    #[test]
    fn log_singularities() {
        let c = LqgConstants::sqrt_8_3();
        let spec = GridSpec::centered(128, 6.0).unwrap();
        let base = Field::zeros(spec);
        let h1 = add_log_singularities(&base, &c, SingularityStyle::H1).unwrap();
        // inside the unit disk the h1 profile vanishes
        let (i, j) = spec.snap(Point::new(0.25, 0.25)).unwrap();
        assert_eq!(h1.value_at(i, j), 0.0);
        // outside: -(2Q-gamma) log|z|
        let (i, j) = spec.snap(Point::new(2.0, 0.0)).unwrap();
        let z = spec.node(i, j);
        let expect = -(2.0 * c.q() - c.gamma()) * z.norm().ln();
        assert!((h1.value_at(i, j) - expect).abs() < 1e-12);

        let hl = add_log_singularities(&base, &c, SingularityStyle::HL).unwrap();
        // regression-locked profile value at z = 2 (snapped):
        // gamma*G(0,z) + gamma*G(1,z) - (2Q-gamma) log|z|
        let g0 = crate::constants::gff_covariance(z, Point::ZERO).unwrap();
        let g1 = crate::constants::gff_covariance(z, Point::new(1.0, 0.0)).unwrap();
        let expect = c.gamma() * (g0 + g1) - (2.0 * c.q() - c.gamma()) * z.norm().ln();
        assert!((hl.value_at(i, j) - expect).abs() < 1e-12);
        // far field: |hL - h1| profile tends to zero
        let (i, j) = spec.snap(Point::new(2.9, 0.0)).unwrap();
        let gap_far = (hl.value_at(i, j) - h1.value_at(i, j)).abs();
        let (i2, j2) = spec.snap(Point::new(1.6, 0.0)).unwrap();
        let gap_near = (hl.value_at(i2, j2) - h1.value_at(i2, j2)).abs();
        assert!(gap_far < gap_near);
        // grid missing the marked points is rejected
        let off = GridSpec::new(32, 0.01, Point::new(5.0, 5.0)).unwrap();
        assert!(add_log_singularities(&Field::zeros(off), &c, SingularityStyle::HL).is_err());
    }

    #[test]
    fn unit_area_normalization() {
        let c = LqgConstants::new(1.0, 3.0).unwrap();
        let spec = GridSpec::centered(16, 2.0).unwrap();
        let f = Field::constant(spec, 0.7);
        let (g, w) = unit_area_normalize(&f, 1.0, &c).unwrap();
        assert_eq!(g.values, f.values);
        assert_eq!(w, 1.0);
        // gamma = sqrt 2 kills the exponent
        let c2 = LqgConstants::new(2.0f64.sqrt(), 3.0).unwrap();
        let (_, w2) = unit_area_normalize(&f, 3.7, &c2).unwrap();
        // the exponent 4/gamma^2 - 2 vanishes at gamma = sqrt 2 (up to float rounding)
        assert!((w2 - 1.0).abs() < 1e-12);
        assert!(unit_area_normalize(&f, 0.0, &c).is_err());
    }
}
