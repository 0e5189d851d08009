//! Uniform node grids and the fields sampled on them.
//!
//! Nodes are stored row-major: node `(i, j)` lives at index `j * nx + i` and
//! sits at `origin + (i h, j h)`.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};

/// Width, in nodes, of the outer band that a valid set must not reach.
pub const MARGIN_NODES: usize = 2;

const LSF_MAGIC: &[u8; 4] = b"LSF1";
const SFL_MAGIC: &[u8; 4] = b"SFL1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 16 || ny < 16 {
            return Err(Error::InvalidGrid(format!("need at least 16x16 nodes, got {nx}x{ny}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { nx, ny, h, origin })
    }

    /// Smallest grid with spacing `h` whose nodes cover `[xmin, xmax] x [ymin, ymax]`.
    pub fn covering(xmin: f64, xmax: f64, ymin: f64, ymax: f64, h: f64) -> Result<Self> {
        if !(xmax > xmin && ymax > ymin) {
            return Err(Error::InvalidGrid("empty extent".into()));
        }
        let nx = ((xmax - xmin) / h - 1e-9).ceil() as usize + 1;
        let ny = ((ymax - ymin) / h - 1e-9).ceil() as usize + 1;
        Self::new(nx, ny, h, [xmin, ymin])
    }

    /// Square grid centred on `center` with half-width at least `half`.
    pub fn centered(center: [f64; 2], half: f64, h: f64) -> Result<Self> {
        let n = (half / h).ceil() as usize;
        let origin = [center[0] - n as f64 * h, center[1] - n as f64 * h];
        Self::new(2 * n + 1, 2 * n + 1, h, origin)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn max_corner(&self) -> [f64; 2] {
        self.point(self.nx - 1, self.ny - 1)
    }

    /// Continuous grid coordinates (in units of `h`) of a physical point.
    #[inline]
    pub fn to_grid(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.origin[0]) / self.h, (p[1] - self.origin[1]) / self.h]
    }

    /// Whether the closed ball `B_r(p)` lies inside the node bounding box.
    pub fn contains_ball(&self, p: [f64; 2], r: f64) -> bool {
        let hi = self.max_corner();
        p[0] - r >= self.origin[0] && p[1] - r >= self.origin[1] && p[0] + r <= hi[0] && p[1] + r <= hi[1]
    }

    pub fn in_margin(&self, i: usize, j: usize) -> bool {
        i < MARGIN_NODES || j < MARGIN_NODES || i + MARGIN_NODES >= self.nx || j + MARGIN_NODES >= self.ny
    }

    /// Bilinear interpolation of nodal values, clamped to the grid box.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> f64 {
        let g = self.to_grid(p);
        let gx = g[0].clamp(0.0, (self.nx - 1) as f64);
        let gy = g[1].clamp(0.0, (self.ny - 1) as f64);
        let i = (gx.floor() as usize).min(self.nx - 2);
        let j = (gy.floor() as usize).min(self.ny - 2);
        let s = gx - i as f64;
        let t = gy - j as f64;
        let k = self.index(i, j);
        let v00 = values[k];
        let v10 = values[k + 1];
        let v01 = values[k + self.nx];
        let v11 = values[k + self.nx + 1];
        (1.0 - t) * ((1.0 - s) * v00 + s * v10) + t * ((1.0 - s) * v01 + s * v11)
    }

    fn write_header<W: Write>(&self, w: &mut W, magic: &[u8; 4]) -> std::io::Result<()> {
        w.write_all(magic)?;
        w.write_all(&(self.nx as u64).to_le_bytes())?;
        w.write_all(&(self.ny as u64).to_le_bytes())?;
        w.write_all(&self.h.to_le_bytes())?;
        w.write_all(&self.origin[0].to_le_bytes())?;
        w.write_all(&self.origin[1].to_le_bytes())
    }

    fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<Self> {
        let mut m = [0u8; 4];
        r.read_exact(&mut m)?;
        if &m != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&m),
                String::from_utf8_lossy(magic)
            )));
        }
        let nx = read_u64(r)? as usize;
        let ny = read_u64(r)? as usize;
        let h = read_f64(r)?;
        let ox = read_f64(r)?;
        let oy = read_f64(r)?;
        Self::new(nx, ny, h, [ox, oy])
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_values<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_values<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn write_csv<W: Write>(w: &mut W, grid: &GridSpec, name: &str, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "x,y,{name}")?;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.point(i, j);
            writeln!(w, "{:e},{:e},{:e}", p[0], p[1], values[grid.index(i, j)])?;
        }
    }
    Ok(())
}

/// Reads `x,y,value` rows written in row-major node order and recovers the grid.
fn read_csv<R: BufRead>(r: R) -> Result<(GridSpec, Vec<f64>)> {
    let mut rows = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with('x')) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("line {}: expected 3 columns", lineno + 1)));
        }
        let mut vals = [0.0; 3];
        for (k, s) in parts.iter().enumerate() {
            vals[k] = s
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        }
        rows.push(vals);
    }
    if rows.len() < 2 {
        return Err(Error::Format("too few rows".into()));
    }
    let y0 = rows[0][1];
    let nx = rows.iter().take_while(|r| r[1] == y0).count();
    if nx < 2 || rows.len() % nx != 0 {
        return Err(Error::Format("rows do not form a rectangular grid".into()));
    }
    let ny = rows.len() / nx;
    let h = rows[1][0] - rows[0][0];
    let grid = GridSpec::new(nx, ny, h, [rows[0][0], y0])?;
    for (k, row) in rows.iter().enumerate() {
        let (i, j) = grid.ij(k);
        let p = grid.point(i, j);
        if (p[0] - row[0]).abs() > 1e-6 * h || (p[1] - row[1]).abs() > 1e-6 * h {
            return Err(Error::Format(format!("row {} is not in row-major grid order", k + 1)));
        }
    }
    Ok((grid, rows.into_iter().map(|r| r[2]).collect()))
}

/// Scalar level-set function; the represented set is `{phi > 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    grid: GridSpec,
    phi: Vec<f64>,
}

impl LevelSetField {
    pub fn new(grid: GridSpec, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != grid.len() {
            return Err(Error::InvalidField(format!("expected {} values, got {}", grid.len(), phi.len())));
        }
        if let Some(k) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {k}")));
        }
        Ok(Self { grid, phi })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mut phi = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                phi.push(f(grid.point(i, j)));
            }
        }
        Self::new(grid, phi)
    }

    /// The empty set: every node at `-extent`.
    pub fn empty(grid: GridSpec) -> Self {
        let extent = grid.h * (grid.nx + grid.ny) as f64;
        Self { grid, phi: vec![-extent; grid.len()] }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn into_values(self) -> Vec<f64> {
        self.phi
    }

    #[inline]
    pub fn inside(&self, idx: usize) -> bool {
        self.phi[idx] > 0.0
    }

    pub fn interior_count(&self) -> usize {
        self.phi.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn is_empty_set(&self) -> bool {
        self.interior_count() == 0
    }

    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        self.grid.interpolate(&self.phi, p)
    }

    /// Fails if any interior node lies in the outer margin band.
    pub fn check_margin(&self) -> Result<()> {
        let g = &self.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.in_margin(i, j) && self.phi[g.index(i, j)] > 0.0 {
                    return Err(Error::MarginViolation { i, j });
                }
            }
        }
        Ok(())
    }

    /// Whole-cell translation; vacated nodes take `fill`.
    pub fn shifted(&self, di: isize, dj: isize, fill: f64) -> Self {
        let g = self.grid;
        let mut phi = vec![fill; g.len()];
        for j in 0..g.ny as isize {
            for i in 0..g.nx as isize {
                let (si, sj) = (i - di, j - dj);
                if si >= 0 && sj >= 0 && (si as usize) < g.nx && (sj as usize) < g.ny {
                    phi[g.index(i as usize, j as usize)] = self.phi[g.index(si as usize, sj as usize)];
                }
            }
        }
        Self { grid: g, phi }
    }

    /// Nodewise inclusion `{self > 0} ⊂ {other > 0}`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.grid == other.grid && self.phi.iter().zip(&other.phi).all(|(a, b)| *a <= 0.0 || *b > 0.0)
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        self.grid.write_header(w, LSF_MAGIC)?;
        write_values(w, &self.phi)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let grid = GridSpec::read_header(r, LSF_MAGIC)?;
        let phi = read_values(r, grid.len())?;
        Self::new(grid, phi)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write_csv(w, &self.grid, "phi", &self.phi)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let (grid, phi) = read_csv(r)?;
        Self::new(grid, phi)
    }
}

/// Nodal scalar data: PDE solutions, distances, sources.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.point(i, j)));
            }
        }
        Self::new(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        self.grid.interpolate(&self.values, p)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Nodal quadrature `sum v h^2`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h * self.grid.h
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        self.grid.write_header(w, SFL_MAGIC)?;
        write_values(w, &self.values)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let grid = GridSpec::read_header(r, SFL_MAGIC)?;
        let values = read_values(r, grid.len())?;
        Self::new(grid, values)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write_csv(w, &self.grid, "value", &self.values)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let (grid, values) = read_csv(r)?;
        Self::new(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(20, 17, 0.25, [-1.0, 2.0]).unwrap()
    }

    #[test]
    fn rejects_small_or_bad_grids() {
        assert!(GridSpec::new(15, 40, 0.1, [0.0, 0.0]).is_err());
        assert!(GridSpec::new(40, 40, 0.0, [0.0, 0.0]).is_err());
        assert!(GridSpec::new(40, 40, 0.1, [f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn covering_reaches_the_far_corner() {
        let g = GridSpec::covering(-1.0, 1.0, -0.5, 0.5, 0.05).unwrap();
        assert_eq!((g.nx, g.ny), (41, 21));
        let hi = g.max_corner();
        assert!(hi[0] >= 1.0 - 1e-12 && hi[1] >= 0.5 - 1e-12);
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = grid();
        let mut v = vec![0.0; g.len()];
        v[7] = f64::INFINITY;
        assert!(matches!(LevelSetField::new(g, v), Err(Error::InvalidField(_))));
    }

    #[test]
    fn bilinear_is_exact_for_affine_data() {
        let g = grid();
        let f = ScalarField::from_fn(g, |p| 2.0 * p[0] - 3.0 * p[1] + 0.5).unwrap();
        let p = [0.37, 3.11];
        assert!((f.interpolate(p) - (2.0 * p[0] - 3.0 * p[1] + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn margin_is_detected() {
        let g = grid();
        let mut v = vec![-1.0; g.len()];
        v[g.index(1, 8)] = 1.0;
        let f = LevelSetField::new(g, v).unwrap();
        assert!(matches!(f.check_margin(), Err(Error::MarginViolation { i: 1, j: 8 })));
    }

    #[test]
    fn binary_rejects_wrong_magic() {
        let f = ScalarField::zeros(grid());
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert!(LevelSetField::read_binary(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn binary_header_layout() {
        let f = LevelSetField::empty(grid());
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"LSF1");
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 20);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 17);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 0.25);
        assert_eq!(buf.len(), 44 + 8 * 20 * 17);
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(seed in prop::collection::vec(-10.0f64..10.0, 20 * 17)) {
            let f = LevelSetField::new(grid(), seed).unwrap();
            let mut buf = Vec::new();
            f.write_binary(&mut buf).unwrap();
            prop_assert_eq!(&LevelSetField::read_binary(&mut buf.as_slice()).unwrap(), &f);

            let mut text = Vec::new();
            f.write_csv(&mut text).unwrap();
            let back = LevelSetField::read_csv(text.as_slice()).unwrap();
            prop_assert_eq!(back.grid().nx, 20);
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
            }
        }
    }
}
