//! Structured triangulation of the unit square and piecewise-constant
//! coefficient fields.
//!
//! The square is cut into `N = n·m` fine squares per side. Square `s = r·N + c`
//! (row `r` counted from `y = 0`) is split along its lower-left → upper-right
//! diagonal into triangles `2s = (ll, lr, ur)` and `2s+1 = (ll, ur, ul)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_mask: Vec<bool>,
}

impl Mesh {
    /// Fine squares per side.
    pub fn side(&self) -> usize {
        self.n * self.m
    }

    pub fn nodes_per_side(&self) -> usize {
        self.side() + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_squares(&self) -> usize {
        self.side() * self.side()
    }

    #[inline]
    pub fn node(&self, row: usize, col: usize) -> usize {
        row * self.nodes_per_side() + col
    }

    #[inline]
    pub fn node_rc(&self, p: usize) -> (usize, usize) {
        (p / self.nodes_per_side(), p % self.nodes_per_side())
    }

    #[inline]
    pub fn square_rc(&self, s: usize) -> (usize, usize) {
        (s / self.side(), s % self.side())
    }

    #[inline]
    pub fn square_of_triangle(t: usize) -> usize {
        t / 2
    }

    /// Signed area via the cross product of the edge vectors.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }
}

pub fn build_mesh(n: usize, m: usize) -> Result<Mesh> {
    if n == 0 || m == 0 {
        return invalid(format!("mesh needs n >= 1 and m >= 1, got n={n}, m={m}"));
    }
    let side = n * m;
    let np = side + 1;
    let h = 1.0 / side as f64;

    let mut nodes = Vec::with_capacity(np * np);
    let mut boundary_mask = Vec::with_capacity(np * np);
    for r in 0..np {
        for c in 0..np {
            // exact endpoints so boundary coordinates are exactly 0 or 1
            let x = if c == side { 1.0 } else { c as f64 * h };
            let y = if r == side { 1.0 } else { r as f64 * h };
            nodes.push([x, y]);
            boundary_mask.push(r == 0 || c == 0 || r == side || c == side);
        }
    }

    let mut triangles = Vec::with_capacity(2 * side * side);
    for r in 0..side {
        for c in 0..side {
            let ll = r * np + c;
            let lr = ll + 1;
            let ul = ll + np;
            let ur = ul + 1;
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }

    Ok(Mesh { n, m, h, nodes, triangles, boundary_mask })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSpec {
    Constant { value: f64 },
    LogUniform { lo: f64, hi: f64, seed: u64 },
    /// Values read from a file or supplied directly.
    Imported,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    /// One value per triangle.
    pub values: Vec<f64>,
    pub spec: CoefficientSpec,
}

#[inline]
fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_coefficient(mesh: &Mesh, spec: &CoefficientSpec) -> Result<CoefficientField> {
    let squares: Vec<f64> = match *spec {
        CoefficientSpec::Constant { value } => {
            if !(value > 0.0) || !value.is_finite() {
                return invalid(format!("constant coefficient must be positive, got {value}"));
            }
            vec![value; mesh.num_squares()]
        }
        CoefficientSpec::LogUniform { lo, hi, seed } => {
            if !(lo > 0.0) || !(hi > lo) || !hi.is_finite() {
                return invalid(format!("log-uniform range needs 0 < lo < hi, got ({lo}, {hi})"));
            }
            let (a, b) = (lo.ln(), hi.ln());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..mesh.num_squares())
                .map(|_| (a + unit_f64(rng.next_u64()) * (b - a)).exp().clamp(lo, hi))
                .collect()
        }
        CoefficientSpec::Imported => {
            return invalid("an imported field cannot be sampled; use from_square_values");
        }
    };
    let mut field = CoefficientField::from_square_values(mesh, &squares)?;
    field.spec = spec.clone();
    Ok(field)
}

impl CoefficientField {
    pub fn from_square_values(mesh: &Mesh, squares: &[f64]) -> Result<Self> {
        if squares.len() != mesh.num_squares() {
            return invalid(format!(
                "expected {} square values, got {}",
                mesh.num_squares(),
                squares.len()
            ));
        }
        if let Some(v) = squares.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return invalid(format!("coefficient values must be positive and finite, got {v}"));
        }
        let values = squares.iter().flat_map(|&v| [v, v]).collect();
        Ok(Self { values, spec: CoefficientSpec::Imported })
    }

    pub fn square_value(&self, s: usize) -> f64 {
        self.values[2 * s]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Header `# n m lo hi seed`, then one value per fine square in row-major order.
    pub fn to_csv(&self, mesh: &Mesh) -> String {
        let (lo, hi, seed) = match self.spec {
            CoefficientSpec::Constant { value } => (value, value, 0),
            CoefficientSpec::LogUniform { lo, hi, seed } => (lo, hi, seed),
            CoefficientSpec::Imported => (self.min(), self.max(), 0),
        };
        let mut out = format!("# {} {} {:e} {:e} {}\n", mesh.n, mesh.m, lo, hi, seed);
        for s in 0..mesh.num_squares() {
            // `{:e}` of an f64 prints the shortest round-tripping mantissa
            out.push_str(&format!("{:e}\n", self.square_value(s)));
        }
        out
    }

    pub fn from_csv(mesh: &Mesh, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty coefficient file".into()))?;
        let fields: Vec<&str> = header.trim_start_matches('#').split_whitespace().collect();
        if !header.starts_with('#') || fields.len() != 5 {
            return Err(Error::Parse(format!("bad header line: {header:?}")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let (n, m) = (parse_usize(fields[0])?, parse_usize(fields[1])?);
        if (n, m) != (mesh.n, mesh.m) {
            return invalid(format!("file is for n={n}, m={m}; mesh has n={}, m={}", mesh.n, mesh.m));
        }
        let squares = lines
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{l:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_square_values(mesh, &squares)
    }
}
