//! Spatial weight matrices.
//!
//! Network weights use a Gaussian kernel on average log assets, geographic
//! weights an exponential decay in Haversine distance. Both are
//! row-normalized. The spectrum of `W` is computed once and reused for the
//! log-determinant `ln|I − ρW| = Σ ln(1 − ρλᵢ)`.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{median, sample_sd};
use crate::panel::GeoPoint;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Network,
    Geographic,
    Custom,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    checksum: u64,
}

/// Nonnegative `N × N` weights with zero diagonal.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    kind: WeightKind,
    row_normalized: bool,
    // Row sums of a symmetric raw kernel: W is then similar to a symmetric
    // matrix and has a real spectrum.
    symmetric_raw_row_sums: Option<Vec<f64>>,
    spectrum: OnceLock<Spectrum>,
}

fn checksum(m: &DMatrix<f64>) -> u64 {
    // FNV-1a over the bit patterns
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in m.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn validate_raw(raw: &DMatrix<f64>) -> Result<()> {
    if !raw.is_square() || raw.nrows() < 2 {
        return Err(invalid(format!(
            "weight matrix must be square with N >= 2, got {:?}",
            raw.shape()
        )));
    }
    for i in 0..raw.nrows() {
        if raw[(i, i)] != 0.0 {
            return Err(invalid(format!("nonzero diagonal at entity {i}")));
        }
    }
    if let Some(v) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(invalid(format!(
            "weights must be finite and nonnegative, found {v}"
        )));
    }
    Ok(())
}

/// Divide every row by its sum. A zero row (isolated entity) is an error
/// naming the entity.
pub fn row_normalize(
    raw: &DMatrix<f64>,
    kind: WeightKind,
    labels: Option<&[String]>,
) -> Result<WeightMatrix> {
    validate_raw(raw)?;
    let n = raw.nrows();
    let sums: Vec<f64> = (0..n).map(|i| raw.row(i).sum()).collect();
    if let Some(i) = sums.iter().position(|s| *s <= 0.0) {
        let name = labels
            .and_then(|l| l.get(i))
            .cloned()
            .unwrap_or_else(|| format!("#{i}"));
        return Err(Error::IsolatedNode(name));
    }
    let w = DMatrix::from_fn(n, n, |i, j| raw[(i, j)] / sums[i]);
    let symmetric = (0..n).all(|i| (0..i).all(|j| raw[(i, j)] == raw[(j, i)]));
    Ok(WeightMatrix {
        w,
        kind,
        row_normalized: true,
        symmetric_raw_row_sums: symmetric.then_some(sums),
        spectrum: OnceLock::new(),
    })
}

/// Gaussian kernel on log-asset differences, bandwidth defaulting to the
/// sample standard deviation of `avg_log_assets`.
pub fn network_weights(avg_log_assets: &[f64], bandwidth: Option<f64>) -> Result<WeightMatrix> {
    let n = avg_log_assets.len();
    if n < 2 {
        return Err(invalid("network weights need N >= 2"));
    }
    if avg_log_assets.iter().any(|a| !a.is_finite()) {
        return Err(invalid("avg_log_assets must be finite"));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(invalid(format!("bandwidth must be positive, got {h}"))),
        None => {
            let sd = sample_sd(avg_log_assets);
            if sd <= 0.0 {
                return Err(invalid(
                    "avg_log_assets has zero variance; supply a bandwidth",
                ));
            }
            sd
        }
    };
    let raw = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d = avg_log_assets[i] - avg_log_assets[j];
            (-d * d / (2.0 * h * h)).exp()
        }
    });
    row_normalize(&raw, WeightKind::Network, None)
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// `exp(−d_ij / d_median)` with `d_median` the median pairwise distance.
pub fn geographic_weights(coords: &[GeoPoint]) -> Result<WeightMatrix> {
    let n = coords.len();
    if n < 2 {
        return Err(invalid("geographic weights need N >= 2"));
    }
    if let Some(p) = coords
        .iter()
        .find(|p| !(p.lat.abs() <= 90.0 && p.lon.abs() <= 180.0))
    {
        return Err(invalid(format!(
            "invalid coordinates ({}, {})",
            p.lat, p.lon
        )));
    }
    let mut d = DMatrix::zeros(n, n);
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            let v = haversine_km(coords[i], coords[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
            pairs.push(v);
        }
    }
    let dm = median(&pairs);
    if dm <= 0.0 {
        return Err(invalid(
            "median pairwise distance is zero (co-located entities)",
        ));
    }
    let raw = DMatrix::from_fn(
        n,
        n,
        |i, j| if i == j { 0.0 } else { (-d[(i, j)] / dm).exp() },
    );
    row_normalize(&raw, WeightKind::Geographic, None)
}

impl WeightMatrix {
    /// Wrap a matrix as-is (validated for zero diagonal and nonnegativity).
    /// It is flagged row-normalized when every row sums to 1 within 1e-12.
    pub fn from_raw_unnormalized(w: DMatrix<f64>, kind: WeightKind) -> Result<Self> {
        validate_raw(&w)?;
        let row_normalized = (0..w.nrows()).all(|i| (w.row(i).sum() - 1.0).abs() <= 1e-12);
        Ok(Self {
            w,
            kind,
            row_normalized,
            symmetric_raw_row_sums: None,
            spectrum: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn is_row_normalized(&self) -> bool {
        self.row_normalized
    }

    pub fn lag(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.w * v
    }

    /// Eigenvalues of `W`, computed on first use.
    pub fn spectrum(&self) -> Result<&Spectrum> {
        if let Some(s) = self.spectrum.get() {
            debug_assert_eq!(s.checksum, checksum(&self.w));
            return Ok(s);
        }
        let eigenvalues = self.compute_eigenvalues()?;
        if self.row_normalized {
            let max_mod = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if max_mod > 1.0 + 1e-8 {
                return Err(Error::Numerical(format!(
                    "row-stochastic W has eigenvalue modulus {max_mod} > 1"
                )));
            }
        }
        let s = Spectrum {
            eigenvalues,
            checksum: checksum(&self.w),
        };
        Ok(self.spectrum.get_or_init(|| s))
    }

    /// `true` when the cached spectrum was computed from the current matrix.
    pub fn verify_cache(&self) -> bool {
        self.spectrum
            .get()
            .is_none_or(|s| s.checksum == checksum(&self.w))
    }

    fn compute_eigenvalues(&self) -> Result<Vec<Complex<f64>>> {
        let n = self.n();
        if let Some(r) = &self.symmetric_raw_row_sums {
            // D^{1/2} W D^{-1/2} is symmetric
            let s = DMatrix::from_fn(n, n, |i, j| self.w[(i, j)] * (r[i] / r[j]).sqrt());
            let s = (&s + s.transpose()) * 0.5;
            let ev = s.symmetric_eigen().eigenvalues;
            return Ok(ev.iter().map(|&v| Complex::new(v, 0.0)).collect());
        }
        let schur = nalgebra::Schur::try_new(self.w.clone(), 1e-14, 10_000)
            .ok_or_else(|| Error::Numerical("eigen-solver did not converge on W".into()))?;
        Ok(schur.complex_eigenvalues().iter().copied().collect())
    }

    /// Open interval of ρ for which `I − ρW` stays nonsingular along the
    /// segment from 0, intersected with (−1, 1).
    pub fn rho_interval(&self) -> Result<(f64, f64)> {
        let ev = &self.spectrum()?.eigenvalues;
        let real: Vec<f64> = ev
            .iter()
            .filter(|z| z.im.abs() <= 1e-10 * z.norm().max(1.0))
            .map(|z| z.re)
            .collect();
        let min = real.iter().copied().fold(f64::INFINITY, f64::min);
        let max = real.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lower = if min < 0.0 {
            (1.0 / min).max(-1.0)
        } else {
            -1.0
        };
        let upper = if max > 0.0 { (1.0 / max).min(1.0) } else { 1.0 };
        Ok((lower, upper))
    }

    /// Log-determinant `ln|I − ρW|` from the cached spectrum.
    pub fn log_det(&self, rho: f64) -> Result<f64> {
        let (lo, hi) = self.rho_interval()?;
        if !(rho > lo && rho < hi) {
            return Err(Error::RhoOutOfInterval {
                rho,
                lower: lo,
                upper: hi,
            });
        }
        Ok(self.log_det_unchecked(rho))
    }

    /// Same as [`log_det`](Self::log_det) without the interval check; the
    /// spectrum must already be cached.
    pub(crate) fn log_det_unchecked(&self, rho: f64) -> f64 {
        let ev = &self.spectrum.get().expect("spectrum cached").eigenvalues;
        let one = Complex::new(1.0, 0.0);
        let sum: Complex<f64> = ev.iter().map(|&l| (one - l * rho).ln()).sum();
        // conjugate pairs cancel; the determinant is real and positive here
        debug_assert!(
            sum.im.abs() <= 1e-10 * (1.0 + sum.re.abs()),
            "complex log-det {sum}"
        );
        sum.re
    }

    /// `P W Pᵀ` for the relabeling `new[k] = old[perm[k]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let w = DMatrix::from_fn(n, n, |i, j| self.w[(perm[i], perm[j])]);
        Self {
            w,
            kind: self.kind,
            row_normalized: self.row_normalized,
            symmetric_raw_row_sums: self
                .symmetric_raw_row_sums
                .as_ref()
                .map(|r| perm.iter().map(|&p| r[p]).collect()),
            spectrum: OnceLock::new(),
        }
    }
}

/// Load an `N × N` delimited matrix. A non-numeric first row is treated as a
/// header. With `normalize`, rows are divided by their sums.
pub fn load_weights(path: &Path, delimiter: char, normalize: bool) -> Result<WeightMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if k == 0 => continue,
            Err(_) => {
                return Err(invalid(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    k + 1
                )));
            }
        }
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!(
            "{}: weight matrix is not square",
            path.display()
        )));
    }
    let raw = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    if normalize {
        row_normalize(&raw, WeightKind::Custom, None)
    } else {
        WeightMatrix::from_raw_unnormalized(raw, WeightKind::Custom)
    }
}

pub fn write_weights<W: Write>(w: &WeightMatrix, out: W, delimiter: char) -> Result<()> {
    let mut wr = csv::WriterBuilder::new()
        .delimiter(delimiter as u8)
        .from_writer(out);
    for i in 0..w.n() {
        wr.write_record(w.matrix().row(i).iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}
