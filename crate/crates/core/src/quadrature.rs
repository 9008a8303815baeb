//! Spherical quadrature rules and precomputed harmonic tables.
//!
//! The default rule is a Gauss-Legendre product grid, exact for spherical
//! polynomials up to its degree. Equal-weight spherical designs can be loaded
//! from text files. A [`BasisTable`] binds a grid to harmonics up to some
//! `lmax` and performs synthesis (coefficients to node values) and analysis
//! (node values to coefficients); on product grids both are separable and
//! cost `O(L^3)`.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};
use crate::harmonics::{
    assemble, eval_harmonics, lm_index, AzimuthFactors, HarmonicValues, LegendreRing, SignalSample, SphericalPoint,
    SurfaceGradient,
};

/// Residual allowed in the exactness sweep of a loaded design.
pub const DESIGN_TOLERANCE: f64 = 1e-8;
/// Maximum deviation of a design point's norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    GaussProduct,
    TDesign,
}

/// Ring structure of a product grid.
#[derive(Clone, Debug)]
pub struct ProductLayout {
    pub thetas: Vec<f64>,
    /// Gauss-Legendre weights in `cos(theta)`.
    pub theta_weights: Vec<f64>,
    pub phis: Vec<f64>,
    pub phi_weight: f64,
}

#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub nodes: Vec<SphericalPoint>,
    pub weights: Vec<f64>,
    /// Integrates every spherical polynomial up to this degree exactly.
    pub degree: usize,
    pub kind: GridKind,
    pub product: Option<ProductLayout>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn require_degree(&self, need: usize) -> Result<()> {
        if self.degree < need {
            Err(Error::InsufficientDegree {
                need,
                have: self.degree,
            })
        } else {
            Ok(())
        }
    }
}

/// Gauss-Legendre nodes in `cos(theta)` (`floor(t/2) + 1` rings) times `t + 1`
/// equispaced azimuths. Nodes are theta-major.
pub fn gauss_product_grid(t: usize) -> QuadratureGrid {
    let n_theta = t / 2 + 1;
    let n_phi = t + 1;
    let mut pairs: Vec<(f64, f64)> = if n_theta == 1 {
        vec![(0.0, 2.0)]
    } else {
        GaussLegendre::new(n_theta)
            .expect("at least two Gauss-Legendre nodes")
            .into_iter()
            .collect()
    };
    // descending cos(theta) = ascending theta
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let thetas: Vec<f64> = pairs.iter().map(|&(x, _)| x.acos()).collect();
    let theta_weights: Vec<f64> = pairs.iter().map(|&(_, w)| w).collect();
    let phi_weight = 2.0 * PI / n_phi as f64;
    let phis: Vec<f64> = (0..n_phi).map(|k| k as f64 * phi_weight).collect();

    let mut nodes = Vec::with_capacity(n_theta * n_phi);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    for (&theta, &wt) in thetas.iter().zip(&theta_weights) {
        for &phi in &phis {
            nodes.push(SphericalPoint::new(theta, phi));
            weights.push(wt * phi_weight);
        }
    }
    QuadratureGrid {
        nodes,
        weights,
        degree: t,
        kind: GridKind::GaussProduct,
        product: Some(ProductLayout {
            thetas,
            theta_weights,
            phis,
            phi_weight,
        }),
    }
}

/// Sum with a fixed binary-tree shape.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// `sum_i w_i f_i`.
pub fn integrate(grid: &QuadratureGrid, f: &[f64]) -> Result<f64> {
    if f.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: f.len(),
        });
    }
    let products: Vec<f64> = f.iter().zip(&grid.weights).map(|(x, w)| x * w).collect();
    Ok(pairwise_sum(&products))
}

fn declared_degree(text: &str, path: &Path) -> Option<usize> {
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let lower = rest.to_ascii_lowercase();
            if let Some(pos) = lower.find("degree") {
                let digits: String = lower[pos + 6..]
                    .chars()
                    .skip_while(|c| !c.is_ascii_digit())
                    .take_while(|c| c.is_ascii_digit())
                    .collect();
                if let Ok(t) = digits.parse() {
                    return Some(t);
                }
            }
        }
    }
    let name = path.file_name()?.to_str()?;
    // Hardin-Sloane naming: des.3.<points>.<degree>.txt
    let parts: Vec<&str> = name.split('.').collect();
    if parts.len() >= 4 && parts[0] == "des" && parts[1] == "3" {
        if let Ok(t) = parts[3].parse() {
            return Some(t);
        }
    }
    // `..._t5.txt` style
    let stem = name.split('.').next()?;
    stem.split(|c: char| !c.is_ascii_alphanumeric())
        .filter_map(|tok| tok.strip_prefix('t'))
        .find_map(|digits| digits.parse().ok())
}

/// Rotation applied to designs with a point near a pole; rotating a design preserves it.
fn tilt(v: [f64; 3]) -> [f64; 3] {
    let (a, b) = (0.6154797087, 0.2617993878);
    let (sa, ca) = f64::sin_cos(a);
    let (sb, cb) = f64::sin_cos(b);
    // about x by a, then about z by b
    let y1 = ca * v[1] - sa * v[2];
    let z1 = sa * v[1] + ca * v[2];
    [cb * v[0] - sb * y1, sb * v[0] + cb * y1, z1]
}

/// Parses an equal-weight design from text. `path` is used for messages and
/// for the filename degree convention.
pub fn parse_tdesign(text: &str, path: &Path) -> Result<QuadratureGrid> {
    let format_err = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let degree = declared_degree(text, path).ok_or_else(|| format_err(0, "no declared degree".into()))?;

    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| format_err(i + 1, format!("{tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((i + 1, values));
    }
    // Accept one coordinate per line as well, grouped in threes.
    if !rows.is_empty() && rows.iter().all(|(_, v)| v.len() == 1) {
        if !rows.len().is_multiple_of(3) {
            return Err(format_err(
                rows.last().unwrap().0,
                "coordinate count is not a multiple of 3".into(),
            ));
        }
        rows = rows
            .chunks(3)
            .map(|c| (c[0].0, vec![c[0].1[0], c[1].1[0], c[2].1[0]]))
            .collect();
    }
    if rows.is_empty() {
        return Err(format_err(0, "no points".into()));
    }
    let mut points = Vec::with_capacity(rows.len());
    for (line, v) in rows {
        if v.len() != 3 {
            return Err(format_err(line, format!("expected 3 coordinates, found {}", v.len())));
        }
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(format_err(line, format!("not a unit vector (norm {norm})")));
        }
        points.push([v[0] / norm, v[1] / norm, v[2] / norm]);
    }
    if points.iter().any(|p| (1.0 - p[2] * p[2]).max(0.0).sqrt() < 1e-6) {
        for p in &mut points {
            *p = tilt(*p);
        }
    }
    let n = points.len();
    let grid = QuadratureGrid {
        nodes: points.into_iter().map(SphericalPoint::from_unit_vector).collect(),
        weights: vec![4.0 * PI / n as f64; n],
        degree,
        kind: GridKind::TDesign,
        product: None,
    };
    validate_exactness(&grid, path)?;
    Ok(grid)
}

fn validate_exactness(grid: &QuadratureGrid, path: &Path) -> Result<()> {
    let lmax = grid.degree;
    let table = grid
        .nodes
        .iter()
        .map(|p| eval_harmonics(*p, lmax))
        .collect::<Result<Vec<_>>>()?;
    for l in 0..=lmax {
        for m in -(l as i64)..=l as i64 {
            let values: Vec<f64> = table.iter().map(|h| h.y(l, m)).collect();
            let integral = integrate(grid, &values)?;
            let expected = if l == 0 { (4.0 * PI).sqrt() } else { 0.0 };
            let residual = (integral - expected).abs();
            if residual > DESIGN_TOLERANCE {
                return Err(Error::DesignValidation {
                    path: path.to_path_buf(),
                    l,
                    m,
                    residual,
                });
            }
        }
    }
    Ok(())
}

/// Loads and validates a spherical design: one unit vector per line, with the
/// degree given by a `# degree N` header or the file name.
pub fn load_tdesign(path: impl AsRef<Path>) -> Result<QuadratureGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_tdesign(&text, path)
}

/// Directory searched for design files given by bare name: `SO3TP_DESIGN_DIR`
/// if set, else the designs bundled with this crate.
pub fn design_dir() -> PathBuf {
    std::env::var_os("SO3TP_DESIGN_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data"))
}

/// `path` if it exists, otherwise `path` looked up in [`design_dir`].
pub fn resolve_design(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        path.to_path_buf()
    } else {
        design_dir().join(path)
    }
}

/// How a caller picks quadrature for a required degree.
#[derive(Clone, Debug)]
pub enum QuadratureSpec {
    /// Gauss product grid at the required degree plus `margin`.
    Gauss {
        margin: usize,
    },
    Design(PathBuf),
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::Gauss { margin: 2 }
    }
}

impl QuadratureSpec {
    /// Parses `gauss` or `design:<path>`.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "gauss" {
            Some(QuadratureSpec::default())
        } else {
            s.strip_prefix("design:")
                .map(|p| QuadratureSpec::Design(PathBuf::from(p)))
        }
    }

    pub fn grid_for(&self, need: usize) -> Result<QuadratureGrid> {
        match self {
            QuadratureSpec::Gauss { margin } => Ok(gauss_product_grid(need + margin)),
            QuadratureSpec::Design(path) => {
                let grid = load_tdesign(resolve_design(path))?;
                grid.require_degree(need)?;
                Ok(grid)
            }
        }
    }
}

impl fmt::Display for QuadratureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadratureSpec::Gauss { margin } => write!(f, "gauss (margin {margin})"),
            QuadratureSpec::Design(p) => write!(f, "design:{}", p.display()),
        }
    }
}

/// Node values of a band-limited signal, optionally with surface gradients.
#[derive(Clone, Debug, Default)]
pub struct NodeSignal {
    pub value: Vec<f64>,
    /// Empty unless gradients were requested.
    pub dtheta: Vec<f64>,
    pub dphi_over_sin: Vec<f64>,
}

impl NodeSignal {
    pub fn has_gradient(&self) -> bool {
        !self.dtheta.is_empty()
    }

    #[inline]
    pub fn sample(&self, i: usize) -> SignalSample {
        SignalSample {
            value: self.value[i],
            grad: self.gradient(i),
        }
    }

    #[inline]
    pub fn gradient(&self, i: usize) -> SurfaceGradient {
        if self.dtheta.is_empty() {
            SurfaceGradient::default()
        } else {
            SurfaceGradient::new(self.dtheta[i], self.dphi_over_sin[i])
        }
    }
}

#[derive(Clone, Debug)]
enum Layout {
    Product {
        rings: Vec<LegendreRing>,
        azimuth: Vec<AzimuthFactors>,
    },
    Scattered(Vec<HarmonicValues>),
}

/// Harmonic values over a grid up to `lmax`.
#[derive(Clone, Debug)]
pub struct BasisTable {
    grid: QuadratureGrid,
    lmax: usize,
    layout: Layout,
}

impl BasisTable {
    pub fn new(grid: QuadratureGrid, lmax: usize) -> Result<Self> {
        let layout = match &grid.product {
            Some(p) => Layout::Product {
                rings: p
                    .thetas
                    .iter()
                    .map(|&th| LegendreRing::new(th, lmax))
                    .collect::<Result<_>>()?,
                azimuth: p.phis.iter().map(|&ph| AzimuthFactors::new(ph, lmax)).collect(),
            },
            None => Layout::Scattered(
                grid.nodes
                    .iter()
                    .map(|p| eval_harmonics(*p, lmax))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(BasisTable { grid, lmax, layout })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    fn require_lmax(&self, l: usize) -> Result<()> {
        if l > self.lmax {
            Err(Error::Shape(format!("basis table covers l <= {}, need {l}", self.lmax)))
        } else {
            Ok(())
        }
    }

    /// All harmonic values at node `i`.
    pub fn node_values(&self, i: usize) -> HarmonicValues {
        match &self.layout {
            Layout::Product { rings, azimuth } => {
                let n_phi = azimuth.len();
                assemble(&rings[i / n_phi], &azimuth[i % n_phi], self.lmax)
            }
            Layout::Scattered(values) => values[i].clone(),
        }
    }

    /// Evaluates `sum_{lm} c_{lm} Y_{lm}` (and its gradient) at every node.
    ///
    /// `coeffs` is laid out by [`lm_index`] with length `(lmax_in + 1)^2`.
    pub fn synthesize(&self, coeffs: &[f64], gradients: bool) -> Result<NodeSignal> {
        let lmax_in = coeff_lmax(coeffs.len())?;
        self.require_lmax(lmax_in)?;
        let n = self.grid.len();
        let mut out = NodeSignal {
            value: vec![0.0; n],
            dtheta: if gradients { vec![0.0; n] } else { Vec::new() },
            dphi_over_sin: if gradients { vec![0.0; n] } else { Vec::new() },
        };
        match &self.layout {
            Layout::Product { rings, azimuth } => {
                let width = 2 * lmax_in + 1;
                let (mut a, mut da, mut sa) = (vec![0.0; width], vec![0.0; width], vec![0.0; width]);
                let n_phi = azimuth.len();
                for (j, ring) in rings.iter().enumerate() {
                    for m in -(lmax_in as i64)..=lmax_in as i64 {
                        let am = m.unsigned_abs() as usize;
                        let slot = (m + lmax_in as i64) as usize;
                        let (mut acc, mut dacc, mut sacc) = (0.0, 0.0, 0.0);
                        for l in am..=lmax_in {
                            let c = coeffs[lm_index(l, m)];
                            acc += c * ring.q(l, am);
                            if gradients {
                                dacc += c * ring.dq(l, am);
                                sacc += c * ring.q_over_sin(l, am);
                            }
                        }
                        a[slot] = acc;
                        da[slot] = dacc;
                        sa[slot] = sacc;
                    }
                    for (k, az) in azimuth.iter().enumerate() {
                        let i = j * n_phi + k;
                        let (mut v, mut dt, mut dp) = (0.0, 0.0, 0.0);
                        for m in -(lmax_in as i64)..=lmax_in as i64 {
                            let slot = (m + lmax_in as i64) as usize;
                            let t = az.t(m);
                            v += a[slot] * t;
                            if gradients {
                                dt += da[slot] * t;
                                dp += sa[slot] * az.dt(m);
                            }
                        }
                        out.value[i] = v;
                        if gradients {
                            out.dtheta[i] = dt;
                            out.dphi_over_sin[i] = dp;
                        }
                    }
                }
            }
            Layout::Scattered(values) => {
                let n_coeffs = coeffs.len();
                for (i, h) in values.iter().enumerate() {
                    out.value[i] = dot(coeffs, &h.value[..n_coeffs]);
                    if gradients {
                        out.dtheta[i] = dot(coeffs, &h.dtheta[..n_coeffs]);
                        out.dphi_over_sin[i] = dot(coeffs, &h.dphi_over_sin[..n_coeffs]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Projects node values onto harmonics: `c_{lm} = sum_i w_i g_i Y_{lm}(r_i)` for `l <= lmax_out`.
    pub fn analyze(&self, values: &[f64], lmax_out: usize) -> Result<Vec<f64>> {
        self.require_lmax(lmax_out)?;
        if values.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                got: values.len(),
            });
        }
        let mut out = vec![0.0; (lmax_out + 1) * (lmax_out + 1)];
        match &self.layout {
            Layout::Product { rings, azimuth } => {
                let layout = self.grid.product.as_ref().expect("product layout");
                let n_phi = azimuth.len();
                let width = 2 * lmax_out + 1;
                let mut b = vec![0.0; width];
                for (j, ring) in rings.iter().enumerate() {
                    let row = &values[j * n_phi..(j + 1) * n_phi];
                    for m in -(lmax_out as i64)..=lmax_out as i64 {
                        let terms: Vec<f64> = row.iter().zip(azimuth).map(|(g, az)| g * az.t(m)).collect();
                        b[(m + lmax_out as i64) as usize] = pairwise_sum(&terms) * layout.phi_weight;
                    }
                    let wt = layout.theta_weights[j];
                    for l in 0..=lmax_out {
                        for m in -(l as i64)..=l as i64 {
                            let am = m.unsigned_abs() as usize;
                            out[lm_index(l, m)] += wt * ring.q(l, am) * b[(m + lmax_out as i64) as usize];
                        }
                    }
                }
            }
            Layout::Scattered(table) => {
                let n_out = out.len();
                for ((h, &g), &w) in table.iter().zip(values).zip(&self.grid.weights) {
                    let gw = g * w;
                    for (o, y) in out.iter_mut().zip(&h.value[..n_out]) {
                        *o += gw * y;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `lmax` such that `(lmax + 1)^2 == len`.
pub fn coeff_lmax(len: usize) -> Result<usize> {
    let root = (len as f64).sqrt().round() as usize;
    if root == 0 || root * root != len {
        return Err(Error::Shape(format!("{len} is not a (lmax + 1)^2 coefficient count")));
    }
    Ok(root - 1)
}
