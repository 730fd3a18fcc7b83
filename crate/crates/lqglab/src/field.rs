//! Lattice grids, sampled fields, and the `FGRD1` binary grid format.

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
    pub fn dist(&self, other: Point) -> f64 {
        (*self - other).norm()
    }
    pub fn dot(&self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }
    pub fn scale(&self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}
impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

/// Square periodic lattice: `n` cells per side, physical step `spacing`,
/// node `(i,j)` at `origin + (i,j)*spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub spacing: f64,
    pub origin: Point,
    pub periodic: bool,
}

impl GridSpec {
    pub fn new(n: usize, spacing: f64, origin: Point) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("grid needs n >= 2, got {n}")));
        }
        if !(spacing > 0.0) {
            return Err(Error::config(format!("spacing must be > 0, got {spacing}")));
        }
        Ok(GridSpec {
            n,
            spacing,
            origin,
            periodic: true,
        })
    }

    /// Periodic grid of side length `side` centered on the origin of the plane.
    pub fn centered(n: usize, side: f64) -> Result<Self> {
        let spacing = side / n as f64;
        GridSpec::new(n, spacing, Point::new(-side / 2.0, -side / 2.0))
    }

    /// Physical side length `n * spacing`.
    pub fn side(&self) -> f64 {
        self.n as f64 * self.spacing
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + i as f64 * self.spacing,
            self.origin.y + j as f64 * self.spacing,
        )
    }

    /// Nearest node to `p`; errors if `p` is outside the grid box.
    pub fn snap(&self, p: Point) -> Result<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.spacing;
        let fy = (p.y - self.origin.y) / self.spacing;
        let i = fx.round();
        let j = fy.round();
        if i < 0.0 || j < 0.0 || i > (self.n - 1) as f64 || j > (self.n - 1) as f64 {
            return Err(Error::config(format!(
                "point ({}, {}) is outside the grid box",
                p.x, p.y
            )));
        }
        Ok((i as usize, j as usize))
    }

    /// True if the closed disk `B_r(center)` lies inside the grid box.
    pub fn contains_disk(&self, center: Point, r: f64) -> bool {
        let lo_x = self.origin.x;
        let lo_y = self.origin.y;
        let hi_x = self.origin.x + (self.n - 1) as f64 * self.spacing;
        let hi_y = self.origin.y + (self.n - 1) as f64 * self.spacing;
        center.x - r >= lo_x && center.x + r <= hi_x && center.y - r >= lo_y && center.y + r <= hi_y
    }
}

/// Scale-slab tag carried by a sampled field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlabRange {
    /// `h_{alpha,beta}`; `beta = f64::INFINITY` marks a tail or whole-plane field.
    Band { alpha: f64, beta: f64 },
    Deterministic,
}

impl SlabRange {
    pub fn band(alpha: f64, beta: f64) -> Self {
        SlabRange::Band { alpha, beta }
    }
}

/// A real field sampled on a lattice (random or deterministic).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub spec: GridSpec,
    pub values: Array2<f64>,
    pub slab: SlabRange,
    pub seed: Option<u64>,
    /// Free-form provenance note, e.g. the normalization applied.
    pub note: String,
}

impl Field {
    pub fn zeros(spec: GridSpec) -> Self {
        Field {
            spec,
            values: Array2::zeros((spec.n, spec.n)),
            slab: SlabRange::Deterministic,
            seed: None,
            note: String::new(),
        }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Field {
            spec,
            values: Array2::from_elem((spec.n, spec.n), c),
            slab: SlabRange::Deterministic,
            seed: None,
            note: String::new(),
        }
    }

    /// Sample a deterministic function on the grid nodes.
    pub fn from_fn(spec: GridSpec, f: impl Fn(Point) -> f64) -> Self {
        let mut values = Array2::zeros((spec.n, spec.n));
        for i in 0..spec.n {
            for j in 0..spec.n {
                values[[i, j]] = f(spec.node(i, j));
            }
        }
        Field {
            spec,
            values,
            slab: SlabRange::Deterministic,
            seed: None,
            note: String::new(),
        }
    }

    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Bilinear interpolation with periodic wrap-around.
    pub fn interp(&self, p: Point) -> f64 {
        let n = self.spec.n;
        let fx = (p.x - self.spec.origin.x) / self.spec.spacing;
        let fy = (p.y - self.spec.origin.y) / self.spec.spacing;
        let i0 = fx.floor();
        let j0 = fy.floor();
        let tx = fx - i0;
        let ty = fy - j0;
        let wrap = |k: i64| -> usize { (k.rem_euclid(n as i64)) as usize };
        let (i0, j0) = (i0 as i64, j0 as i64);
        let (i1, j1) = (i0 + 1, j0 + 1);
        let v00 = self.values[[wrap(i0), wrap(j0)]];
        let v10 = self.values[[wrap(i1), wrap(j0)]];
        let v01 = self.values[[wrap(i0), wrap(j1)]];
        let v11 = self.values[[wrap(i1), wrap(j1)]];
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty
            + v11 * tx * ty
    }

    /// Pointwise sum; specs must match. The slab tag of the result is
    /// `Deterministic` unless the caller retags it.
    pub fn add(&self, other: &Field) -> Result<Field> {
        if self.spec != other.spec {
            return Err(Error::config("field addition needs matching grid specs"));
        }
        Ok(Field {
            spec: self.spec,
            values: &self.values + &other.values,
            slab: SlabRange::Deterministic,
            seed: None,
            note: String::new(),
        })
    }

    /// Add a scalar to every node.
    pub fn shift(&self, c: f64) -> Field {
        let mut out = self.clone();
        out.values.mapv_inplace(|v| v + c);
        out
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::precondition("field contains non-finite values"))
        }
    }
}

const FGRD1_MAGIC: &[u8; 6] = b"FGRD1\0";

/// Write a field in the `FGRD1` binary format: a 64-byte header
/// (magic `FGRD1\0`, pad, n as u64, spacing, origin x/y, slab alpha/beta,
/// seed as u64 with the pad flagging presence), then row-major
/// little-endian f64 values.
pub fn write_fgrd1<W: Write + ?Sized>(w: &mut W, field: &Field) -> Result<()> {
    let mut header = [0u8; 64];
    header[..6].copy_from_slice(FGRD1_MAGIC);
    header[6] = field.seed.is_some() as u8;
    header[7] = matches!(field.slab, SlabRange::Deterministic) as u8;
    header[8..16].copy_from_slice(&(field.spec.n as u64).to_le_bytes());
    header[16..24].copy_from_slice(&field.spec.spacing.to_le_bytes());
    header[24..32].copy_from_slice(&field.spec.origin.x.to_le_bytes());
    header[32..40].copy_from_slice(&field.spec.origin.y.to_le_bytes());
    let (alpha, beta) = match field.slab {
        SlabRange::Band { alpha, beta } => (alpha, beta),
        SlabRange::Deterministic => (f64::NAN, f64::NAN),
    };
    header[40..48].copy_from_slice(&alpha.to_le_bytes());
    header[48..56].copy_from_slice(&beta.to_le_bytes());
    header[56..64].copy_from_slice(&field.seed.unwrap_or(0).to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(field.spec.n * field.spec.n * 8);
    for i in 0..field.spec.n {
        for j in 0..field.spec.n {
            buf.extend_from_slice(&field.values[[i, j]].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_fgrd1<R: Read>(r: &mut R) -> Result<Field> {
    let mut header = [0u8; 64];
    r.read_exact(&mut header)?;
    if &header[..6] != FGRD1_MAGIC {
        return Err(Error::config("not an FGRD1 file (bad magic)"));
    }
    let has_seed = header[6] != 0;
    let deterministic = header[7] != 0;
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let spacing = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let ox = f64::from_le_bytes(header[24..32].try_into().unwrap());
    let oy = f64::from_le_bytes(header[32..40].try_into().unwrap());
    let alpha = f64::from_le_bytes(header[40..48].try_into().unwrap());
    let beta = f64::from_le_bytes(header[48..56].try_into().unwrap());
    let seed = u64::from_le_bytes(header[56..64].try_into().unwrap());
    let spec = GridSpec::new(n, spacing, Point::new(ox, oy))?;
    let mut buf = vec![0u8; n * n * 8];
    r.read_exact(&mut buf)?;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let k = (i * n + j) * 8;
            values[[i, j]] = f64::from_le_bytes(buf[k..k + 8].try_into().unwrap());
        }
    }
    Ok(Field {
        spec,
        values,
        slab: if deterministic {
            SlabRange::Deterministic
        } else {
            SlabRange::Band { alpha, beta }
        },
        seed: has_seed.then_some(seed),
        note: String::new(),
    })
}

pub fn save_fgrd1(path: &Path, field: &Field) -> Result<()> {
    crate::report::atomic_write(path, |w| write_fgrd1(w, field))
}

pub fn load_fgrd1(path: &Path) -> Result<Field> {
    let mut f = std::fs::File::open(path)?;
    read_fgrd1(&mut f)
}
