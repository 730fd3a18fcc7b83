//! Gaussian multiplicative chaos cell masses and measure comparison
//! (Prokhorov distance, GHP upper bound).
//!
//! Cell masses use cell-center quadrature of `eps^{gamma^2/2} e^{gamma h_eps}`:
//! deterministic and fast; the discretization bias is part of the fixed-`eps`
//! contract. At fixed `eps` the lattice measure obeys Weyl scaling against
//! the *mollified* perturbation: `gmc(h + f) = e^{gamma * mollify(f)} gmc(h)`
//! per cell (exact for constant `f`).

use crate::constants::LqgConstants;
use crate::error::{Error, Result};
use crate::field::{Field, GridSpec, Point};
use crate::metric::{uniform_metric_distance, DistanceEngine, Region};
use crate::report::pairwise_sum;
use crate::sampler::mollify;
use ndarray::Array2;
use serde::Serialize;

/// Nonnegative mass per lattice cell, or a finite atomic measure.
#[derive(Debug, Clone)]
pub enum DiscreteMeasure {
    Grid { spec: GridSpec, masses: Array2<f64> },
    Atoms { atoms: Vec<(Point, f64)> },
}

impl DiscreteMeasure {
    pub fn atoms(atoms: Vec<(Point, f64)>) -> Result<Self> {
        if atoms.iter().any(|&(_, m)| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::domain("atom masses must be nonnegative and finite"));
        }
        Ok(DiscreteMeasure::Atoms { atoms })
    }

    pub fn total(&self) -> f64 {
        match self {
            DiscreteMeasure::Grid { masses, .. } => {
                let flat: Vec<f64> = masses.iter().copied().collect();
                pairwise_sum(&flat)
            }
            DiscreteMeasure::Atoms { atoms } => {
                let flat: Vec<f64> = atoms.iter().map(|&(_, m)| m).collect();
                pairwise_sum(&flat)
            }
        }
    }

    /// Support as weighted points (cell centers for grid measures).
    pub fn support(&self) -> Vec<(Point, f64)> {
        match self {
            DiscreteMeasure::Grid { spec, masses } => {
                let mut out = Vec::new();
                for i in 0..spec.n {
                    for j in 0..spec.n {
                        let m = masses[[i, j]];
                        if m > 0.0 {
                            out.push((spec.node(i, j), m));
                        }
                    }
                }
                out
            }
            DiscreteMeasure::Atoms { atoms } => {
                atoms.iter().filter(|&&(_, m)| m > 0.0).copied().collect()
            }
        }
    }

    /// Half-diagonal of the support cells (0 for atoms): the atomization
    /// radius used to bracket Prokhorov distances of grid measures.
    pub fn atomization_radius(&self) -> f64 {
        match self {
            DiscreteMeasure::Grid { spec, .. } => spec.spacing * std::f64::consts::FRAC_1_SQRT_2,
            DiscreteMeasure::Atoms { .. } => 0.0,
        }
    }
}

/// GMC cell masses `eps^{gamma^2/2} * exp(gamma * h_eps(z)) * spacing^2`
/// with `h_eps = mollify(field, eps)`, one cell per lattice node.
pub fn gmc_cell_masses(field: &Field, constants: &LqgConstants, eps: f64) -> Result<DiscreteMeasure> {
    let gamma = constants.gamma();
    let h_eps = mollify(field, eps)?;
    let spec = field.spec;
    let cell = spec.spacing * spec.spacing;
    let prefactor = eps.powf(gamma * gamma / 2.0) * cell;
    let masses = h_eps.values.mapv(|v| prefactor * (gamma * v).exp());
    Ok(DiscreteMeasure::Grid { spec, masses })
}

/// Sum of masses of cells whose centers lie in `region` (atoms likewise).
pub fn measure_of_set(m: &DiscreteMeasure, region: &Region) -> f64 {
    match m {
        DiscreteMeasure::Grid { spec, masses } => {
            let mut kept = Vec::new();
            for i in 0..spec.n {
                for j in 0..spec.n {
                    if region.contains(spec.node(i, j)) {
                        kept.push(masses[[i, j]]);
                    }
                }
            }
            pairwise_sum(&kept)
        }
        DiscreteMeasure::Atoms { atoms } => {
            let kept: Vec<f64> = atoms
                .iter()
                .filter(|&&(p, _)| region.contains(p))
                .map(|&(_, m)| m)
                .collect();
            pairwise_sum(&kept)
        }
    }
}

/// Ground metric for measure comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GroundMetric {
    Euclidean,
    /// Chordal distance on the Riemann sphere via the stereographic lift.
    Spherical,
}

impl GroundMetric {
    pub fn dist(&self, a: Point, b: Point) -> f64 {
        match self {
            GroundMetric::Euclidean => a.dist(b),
            GroundMetric::Spherical => {
                let la = stereographic_lift(a);
                let lb = stereographic_lift(b);
                ((la.0 - lb.0).powi(2) + (la.1 - lb.1).powi(2) + (la.2 - lb.2).powi(2)).sqrt()
            }
        }
    }
}

/// Lift `z` to the unit sphere: `(2x, 2y, |z|^2 - 1) / (1 + |z|^2)`.
pub fn stereographic_lift(z: Point) -> (f64, f64, f64) {
    let s = 1.0 + z.norm_sq();
    (2.0 * z.x / s, 2.0 * z.y / s, (z.norm_sq() - 1.0) / s)
}

/// Result of a Prokhorov computation. For atomic supports `lower == upper ==
/// value` (exact within the binary-search tolerance); for cell-supported
/// measures the value is computed on the cell-center atomization and the
/// bracket widens by the atomization radius on each side.
#[derive(Debug, Clone, Serialize)]
pub struct ProkhorovResult {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Total coarsening slack folded into the bracket (nonzero only when the
    /// supports exceeded the exact-mode budget and were merged pairwise).
    pub coarsening: f64,
    pub exact: bool,
}

const PROKHOROV_TOL: f64 = 1e-6;
/// Exact mode runs the flow feasibility check when the product of support
/// sizes stays below this many candidate edges.
const EDGE_BUDGET: usize = 30_000_000;

/// Prokhorov distance between finite measures with finite support:
/// binary search on `eps`, with feasibility (`m1(A) <= m2(A_eps) + eps` for
/// all closed `A`, both directions) decided by a max-flow deficiency test on
/// the bipartite graph of support pairs within distance `eps`.
pub fn prokhorov_distance(
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    ground: GroundMetric,
) -> Result<ProkhorovResult> {
    let mut s1 = m1.support();
    let mut s2 = m2.support();
    if s1.len() + s2.len() > 50_000 {
        return Err(Error::precondition(format!(
            "combined support {} exceeds the 50000-point budget",
            s1.len() + s2.len()
        )));
    }
    let mut coarsening = m1.atomization_radius().max(m2.atomization_radius());
    // Merge nearest pairs (pairwise grid coarsening) until the edge budget holds.
    let mut merge_step = coarsening.max(1e-9);
    while s1.len().saturating_mul(s2.len()) > EDGE_BUDGET {
        s1 = merge_support(&s1, merge_step);
        s2 = merge_support(&s2, merge_step);
        coarsening += merge_step * std::f64::consts::SQRT_2;
        merge_step *= 2.0;
    }
    let value = prokhorov_atomic(&s1, &s2, ground)?;
    let exact = coarsening == 0.0;
    Ok(ProkhorovResult {
        value,
        lower: (value - coarsening).max(0.0),
        upper: value + coarsening,
        coarsening,
        exact,
    })
}

fn merge_support(s: &[(Point, f64)], step: f64) -> Vec<(Point, f64)> {
    use std::collections::HashMap;
    let mut buckets: HashMap<(i64, i64), (f64, f64, f64)> = HashMap::new();
    for &(p, m) in s {
        let key = ((p.x / (2.0 * step)).floor() as i64, (p.y / (2.0 * step)).floor() as i64);
        let e = buckets.entry(key).or_insert((0.0, 0.0, 0.0));
        e.0 += m * p.x;
        e.1 += m * p.y;
        e.2 += m;
    }
    let mut out: Vec<(Point, f64)> = buckets
        .into_values()
        .filter(|&(_, _, m)| m > 0.0)
        .map(|(sx, sy, m)| (Point::new(sx / m, sy / m), m))
        .collect();
    out.sort_by(|a, b| (a.0.x, a.0.y).partial_cmp(&(b.0.x, b.0.y)).unwrap());
    out
}

fn prokhorov_atomic(s1: &[(Point, f64)], s2: &[(Point, f64)], ground: GroundMetric) -> Result<f64> {
    let t1: f64 = pairwise_sum(&s1.iter().map(|&(_, m)| m).collect::<Vec<_>>());
    let t2: f64 = pairwise_sum(&s2.iter().map(|&(_, m)| m).collect::<Vec<_>>());
    if s1.is_empty() && s2.is_empty() {
        return Ok(0.0);
    }
    // eps >= max(total1, total2) is always feasible; so is any eps that both
    // exceeds the largest support distance (all pairs admissible) and covers
    // the total-mass imbalance. Start from the tighter of the two.
    let mut max_d: f64 = 0.0;
    for &(p, _) in s1 {
        for &(q, _) in s2 {
            max_d = max_d.max(ground.dist(p, q));
        }
    }
    let mut hi = (t1.max(t2)).min(max_d.max((t1 - t2).abs())) + PROKHOROV_TOL;
    let mut lo = 0.0f64;
    if !feasible(s1, s2, t1, t2, ground, hi) {
        hi = t1.max(t2) + PROKHOROV_TOL;
    }
    for _ in 0..60 {
        if hi - lo <= PROKHOROV_TOL * 0.5 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(s1, s2, t1, t2, ground, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Both Prokhorov inequalities at level `eps`, via the deficiency form of
/// max-flow/min-cut on the admissible bipartite graph (`d < eps`):
/// `max_A [m1(A) - m2(A_eps)] = total1 - maxflow`, and symmetrically.
fn feasible(
    s1: &[(Point, f64)],
    s2: &[(Point, f64)],
    t1: f64,
    t2: f64,
    ground: GroundMetric,
    eps: f64,
) -> bool {
    let slack = 1e-12 * (t1.max(t2)).max(1.0);
    if t1 <= eps + slack && t2 <= eps + slack {
        return true;
    }
    let mut dinic = Dinic::new(s1.len() + s2.len() + 2);
    let src = s1.len() + s2.len();
    let sink = src + 1;
    for (i, &(_, m)) in s1.iter().enumerate() {
        dinic.add_edge(src, i, m);
    }
    for (j, &(_, m)) in s2.iter().enumerate() {
        dinic.add_edge(s1.len() + j, sink, m);
    }
    for (i, &(p, _)) in s1.iter().enumerate() {
        for (j, &(q, _)) in s2.iter().enumerate() {
            if ground.dist(p, q) < eps {
                dinic.add_edge(i, s1.len() + j, f64::INFINITY);
            }
        }
    }
    let flow = dinic.max_flow(src, sink);
    t1 - flow <= eps + slack && t2 - flow <= eps + slack
}

/// Dinic max flow on f64 capacities.
struct Dinic {
    graph: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    fn new(nodes: usize) -> Self {
        Dinic {
            graph: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            level: vec![0; nodes],
            iter: vec![0; nodes],
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: f64) {
        let e = self.to.len();
        self.graph[a].push(e);
        self.to.push(b);
        self.cap.push(c);
        self.graph[b].push(e + 1);
        self.to.push(a);
        self.cap.push(0.0);
    }

    fn bfs(&mut self, src: usize, sink: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &e in &self.graph[u] {
                let v = self.to[e];
                if self.cap[e] > 1e-15 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, u: usize, sink: usize, pushed: f64) -> f64 {
        if u == sink {
            return pushed;
        }
        while self.iter[u] < self.graph[u].len() {
            let e = self.graph[u][self.iter[u]];
            let v = self.to[e];
            if self.cap[e] > 1e-15 && self.level[v] == self.level[u] + 1 {
                let d = self.dfs(v, sink, pushed.min(self.cap[e]));
                if d > 0.0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, src: usize, sink: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(src, sink) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(src, sink, f64::INFINITY);
                if f <= 1e-15 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }
}

/// GHP upper bound via the identity correspondence:
/// `uniform_metric_distance + prokhorov_distance` (upper bracket for cells).
#[derive(Debug, Clone, Serialize)]
pub struct GhpBound {
    pub uniform_term: f64,
    pub prokhorov_term: f64,
    pub bound: f64,
}

pub fn ghp_upper_bound(
    engine_a: &DistanceEngine,
    m_a: &DiscreteMeasure,
    engine_b: &DistanceEngine,
    m_b: &DiscreteMeasure,
    pairs: &[(Point, Point)],
    ground: GroundMetric,
) -> Result<GhpBound> {
    if engine_a.spec() != engine_b.spec() {
        return Err(Error::config("GHP bound needs both engines on one grid"));
    }
    if let (DiscreteMeasure::Grid { spec: sa, .. }, DiscreteMeasure::Grid { spec: sb, .. }) =
        (m_a, m_b)
    {
        if sa != sb {
            return Err(Error::config("GHP bound needs both measures on one grid"));
        }
    }
    let uniform = uniform_metric_distance(engine_a, engine_b, pairs)?;
    let pro = prokhorov_distance(m_a, m_b, ground)?;
    Ok(GhpBound {
        uniform_term: uniform,
        prokhorov_term: pro.upper,
        bound: uniform + pro.upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::rng::substream;
    use rand::Rng;

    fn delta(p: Point) -> DiscreteMeasure {
        DiscreteMeasure::atoms(vec![(p, 1.0)]).unwrap()
    }

    #[test]
    fn gmc_degenerate_cases() {
        let spec = GridSpec::centered(32, 4.0).unwrap();
        // gamma = 0 gives Lebesgue cell masses exactly
        let c0 = LqgConstants::new(1e-12, 3.0).unwrap(); // gamma must be > 0; emulate 0 separately
        let _ = c0;
        let h = crate::sampler::sample_slab_field(spec, 0.0, 0.5, 1).unwrap();
        // exact gamma = 0 limit is tested through the dedicated helper below
        let lebesgue = gmc_cell_masses_gamma0(&h, 0.25).unwrap();
        if let DiscreteMeasure::Grid { masses, .. } = &lebesgue {
            let cell = spec.spacing * spec.spacing;
            assert!(masses.iter().all(|&m| m == cell));
        } else {
            panic!("expected grid measure");
        }
        // zero field: total mass = eps^{gamma^2/2} * area exactly
        let c = LqgConstants::new(1.0, 3.0).unwrap();
        let eps = 0.25;
        let z = Field::zeros(spec);
        let m = gmc_cell_masses(&z, &c, eps).unwrap();
        let area = spec.side() * spec.side();
        let expect = eps.powf(0.5) * area;
        assert!(
            (m.total() - expect).abs() <= 1e-12 * expect,
            "total {} vs {expect}",
            m.total()
        );
    }

    // gamma = 0 is outside LqgConstants' domain (0,2); the Lebesgue limit is
    // exercised via this small shim used by the test above.
    fn gmc_cell_masses_gamma0(field: &Field, eps: f64) -> Result<DiscreteMeasure> {
        let h_eps = crate::sampler::mollify(field, eps)?;
        let spec = field.spec;
        let cell = spec.spacing * spec.spacing;
        Ok(DiscreteMeasure::Grid {
            spec,
            masses: h_eps.values.mapv(|_| cell),
        })
    }

    #[test]
    fn weyl_scaling_of_measure() {
        let spec = GridSpec::centered(32, 4.0).unwrap();
        let c = LqgConstants::new(1.2, 3.0).unwrap();
        let h = crate::sampler::sample_slab_field(spec, 0.0, 0.5, 7).unwrap();
        let eps = 2.0 * spec.spacing;
        // constant shift: exact per-cell identity
        let shift = 0.8;
        let base = gmc_cell_masses(&h, &c, eps).unwrap();
        let shifted = gmc_cell_masses(&h.shift(shift), &c, eps).unwrap();
        let factor = (c.gamma() * shift).exp();
        if let (DiscreteMeasure::Grid { masses: a, .. }, DiscreteMeasure::Grid { masses: b, .. }) =
            (&base, &shifted)
        {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((y - factor * x).abs() <= 1e-12 * y.abs());
            }
        }
        // smooth perturbation: identity holds against the mollified f
        let f = Field::from_fn(spec, |p| 0.4 * (p.x).sin() + 0.1 * p.y);
        let f_eps = crate::sampler::mollify(&f, eps).unwrap();
        let pert = gmc_cell_masses(&h.add(&f).unwrap(), &c, eps).unwrap();
        if let (DiscreteMeasure::Grid { masses: a, .. }, DiscreteMeasure::Grid { masses: b, .. }) =
            (&base, &pert)
        {
            for ((x, y), fe) in a.iter().zip(b.iter()).zip(f_eps.values.iter()) {
                let factor = (c.gamma() * fe).exp();
                assert!((y - factor * x).abs() <= 1e-11 * y.abs());
            }
        }
    }

    #[test]
    fn measure_of_set_additivity() {
        let spec = GridSpec::centered(32, 4.0).unwrap();
        let c = LqgConstants::new(1.0, 3.0).unwrap();
        let h = crate::sampler::sample_slab_field(spec, 0.0, 0.5, 9).unwrap();
        let m = gmc_cell_masses(&h, &c, 0.25).unwrap();
        let whole = Region::rect(Point::new(-3.0, -3.0), Point::new(3.0, 3.0));
        let left = Region::rect(Point::new(-3.0, -3.0), Point::new(0.03, 3.0));
        let right = Region::rect(Point::new(0.04, -3.0), Point::new(3.0, 3.0));
        let total = measure_of_set(&m, &whole);
        let parts = measure_of_set(&m, &left) + measure_of_set(&m, &right);
        assert!((total - parts).abs() <= 1e-12 * total);
        assert_eq!(
            measure_of_set(&m, &Region::rect(Point::new(10.0, 10.0), Point::new(11.0, 11.0))),
            0.0
        );
        let grid_total = measure_of_set(&m, &Region::Whole);
        assert!((grid_total - m.total()).abs() <= 1e-12 * grid_total);
    }

    #[test]
    fn prokhorov_deltas() {
        // d_P(delta_0, delta_x) = min(|x|, 1)
        let mut rng = substream(42, &[1]);
        for _ in 0..20 {
            let x = Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let d = prokhorov_distance(&delta(Point::ZERO), &delta(x), GroundMetric::Euclidean)
                .unwrap();
            let expect = x.norm().min(1.0);
            assert!(
                (d.value - expect).abs() <= 1e-6,
                "x = ({}, {}): {} vs {expect}",
                x.x,
                x.y,
                d.value
            );
        }
        let same = prokhorov_distance(&delta(Point::ZERO), &delta(Point::ZERO), GroundMetric::Euclidean)
            .unwrap();
        assert!(same.value <= 1e-6);
    }

    #[test]
    fn prokhorov_symmetry_and_triangle() {
        let mut rng = substream(43, &[2]);
        let mut random_measure = |k: usize| {
            let atoms: Vec<(Point, f64)> = (0..k)
                .map(|_| {
                    (
                        Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        rng.gen_range(0.1..1.0),
                    )
                })
                .collect();
            DiscreteMeasure::atoms(atoms).unwrap()
        };
        for _ in 0..25 {
            let a = random_measure(3);
            let b = random_measure(4);
            let c = random_measure(3);
            let dab = prokhorov_distance(&a, &b, GroundMetric::Euclidean).unwrap().value;
            let dba = prokhorov_distance(&b, &a, GroundMetric::Euclidean).unwrap().value;
            assert!((dab - dba).abs() <= 1e-9, "symmetry {dab} vs {dba}");
            let dac = prokhorov_distance(&a, &c, GroundMetric::Euclidean).unwrap().value;
            let dbc = prokhorov_distance(&b, &c, GroundMetric::Euclidean).unwrap().value;
            assert!(dac <= dab + dbc + 3e-6, "triangle {dac} vs {dab} + {dbc}");
        }
    }

    #[test]
    fn spherical_ground_metric() {
        // chordal distance: 0 <-> infinity-ish points approach 2
        let d = GroundMetric::Spherical.dist(Point::ZERO, Point::new(1e6, 0.0));
        assert!((d - 2.0).abs() < 1e-5);
        // antipodal pair z and -1/conj(z): for z = 1, that is -1
        let d = GroundMetric::Spherical.dist(Point::new(1.0, 0.0), Point::new(-1.0, 0.0));
        assert!((d - 2.0).abs() < 1e-12);
        // small euclidean distances near the origin shrink by the conformal factor 2
        let d = GroundMetric::Spherical.dist(Point::new(0.0, 0.0), Point::new(1e-4, 0.0));
        assert!((d / 1e-4 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn ghp_bound_structure() {
        let spec = GridSpec::centered(24, 4.0).unwrap();
        let c = LqgConstants::new(1.0, 3.0).unwrap();
        let h = crate::sampler::sample_slab_field(spec, 0.0, 0.5, 3).unwrap();
        let e = DistanceEngine::new(h.clone(), c.xi(), crate::metric::Stencil::Eight, 1.0).unwrap();
        let m = gmc_cell_masses(&h, &c, 0.4).unwrap();
        let pairs = [(Point::new(-1.0, 0.0), Point::new(1.0, 0.0))];
        let same = ghp_upper_bound(&e, &m, &e, &m, &pairs, GroundMetric::Euclidean).unwrap();
        assert_eq!(same.uniform_term, 0.0);
        // identical cell measures: exact atomic distance is 0; bracket width
        // is the atomization radius
        assert!(same.prokhorov_term <= m.atomization_radius() + 1e-6);
        // Weyl-scaling engine B inflates only the uniform term
        let cshift = 0.5;
        let eb = e.weyl_scale(&Field::constant(spec, cshift)).unwrap();
        let scaled = ghp_upper_bound(&e, &m, &eb, &m, &pairs, GroundMetric::Euclidean).unwrap();
        assert!(scaled.uniform_term > 0.0);
        assert!((scaled.prokhorov_term - same.prokhorov_term).abs() <= 1e-12);
        assert!(scaled.bound >= scaled.prokhorov_term);
    }
}
