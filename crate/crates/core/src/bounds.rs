//! The 3x3 matrices bounding the collision functional, the geometric series
//! built from them, and certification of upper bounds `lambda_c(d) <= r / (2dp)`.
//!
//! Certification only kicks in at astronomically large dimensions (around
//! `1e34` for `r = 1.2`), so dimensions are `u128` and all arithmetic on them
//! is floating point. Logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, Error, Result};

/// Dimension type for the bound machinery.
pub type Dim = u128;

/// JSON form of a [`Dim`]: a number when it fits in `u64`, otherwise a
/// decimal string (JSON tooling rarely handles wider integers).
pub mod dim_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use super::Dim;

    pub fn serialize<S: Serializer>(d: &Dim, s: S) -> Result<S::Ok, S::Error> {
        match u64::try_from(*d) {
            Ok(small) => s.serialize_u64(small),
            Err(_) => s.serialize_str(&d.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Dim, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u64),
            Text(String),
        }
        match Repr::deserialize(de)? {
            Repr::Num(n) => Ok(Dim::from(n)),
            Repr::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

const MIN_DIM: Dim = 8;

fn check_dim(d: Dim) -> Result<()> {
    if d < MIN_DIM {
        return Err(Error::Domain(format!(
            "d = {d}: need d >= {MIN_DIM} so that floor(ln d) >= 2"
        )));
    }
    Ok(())
}

/// `(ln d, floor(ln d), floor(d / ln d), 2 (d - floor(d / ln d)) - floor(ln d))`
fn logs(d: Dim) -> (f64, f64, f64, f64) {
    let df = d as f64;
    let ln = df.ln();
    let block = ln.floor();
    let band = (df / ln).floor();
    (ln, block, band, 2.0 * (df - band) - block)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Lambda,
    Phi,
    /// Φ with the third column written through `floor(ln d)` only.
    PhiStrictFloor,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixParams {
    #[serde(with = "dim_serde")]
    pub d: Dim,
    pub theta: f64,
    pub psi: f64,
    pub m1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundMatrix {
    pub entries: [[f64; 3]; 3],
    pub kind: MatrixKind,
    pub params: MatrixParams,
    /// `(ln d / floor(ln d))^3 - 1` for the printed Φ: how far its third
    /// column sits from the pure column-scaling of Λ. Zero otherwise.
    pub floor_deviation: f64,
}

impl BoundMatrix {
    /// A matrix with three copies of `row`.
    pub fn identical_rows(row: [f64; 3]) -> Result<Self> {
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Validation(format!(
                "entries must be finite and nonnegative: {row:?}"
            )));
        }
        Ok(Self {
            entries: [row; 3],
            kind: MatrixKind::Custom,
            params: MatrixParams {
                d: 0,
                theta: 0.0,
                psi: 0.0,
                m1: 0.0,
            },
            floor_deviation: 0.0,
        })
    }

    fn build(kind: MatrixKind, params: MatrixParams, row: [f64; 3], floor_deviation: f64) -> Self {
        Self {
            entries: [row; 3],
            kind,
            params,
            floor_deviation,
        }
    }

    pub fn row(&self, i: usize) -> [f64; 3] {
        self.entries[i]
    }

    pub fn column(&self, j: usize) -> [f64; 3] {
        [self.entries[0][j], self.entries[1][j], self.entries[2][j]]
    }

    /// Largest row sum.
    pub fn row_sum(&self) -> f64 {
        self.entries
            .iter()
            .map(|r| r.iter().sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn has_identical_rows(&self) -> bool {
        self.entries[1] == self.entries[0] && self.entries[2] == self.entries[0]
    }
}

fn validate(d: Dim, theta: f64, psi: f64, m1: f64) -> Result<MatrixParams> {
    check_dim(d)?;
    for (name, x) in [("theta", theta), ("psi", psi), ("M1", m1)] {
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::Validation(format!(
                "{name} must be finite and nonnegative, got {x}"
            )));
        }
    }
    Ok(MatrixParams { d, theta, psi, m1 })
}

/// Λ: columns `theta / (2(d - band) - block)`, `theta / band`, `psi M1 (ln d)^2 / d`.
pub fn lambda_matrix(d: Dim, theta: f64, psi: f64, m1: f64) -> Result<BoundMatrix> {
    let params = validate(d, theta, psi, m1)?;
    let (ln, _, band, free) = logs(d);
    let row = [theta / free, theta / band, psi * m1 * ln * ln / d as f64];
    Ok(BoundMatrix::build(MatrixKind::Lambda, params, row, 0.0))
}

/// Φ as printed: columns `theta block^(3/(block-1)) / (2(d - band) - block)`,
/// `theta / (band block^3)` and `M1 (ln d)^5 psi / d`.
pub fn phi_matrix(d: Dim, theta: f64, psi: f64, m1: f64) -> Result<BoundMatrix> {
    let params = validate(d, theta, psi, m1)?;
    let (ln, block, band, free) = logs(d);
    let row = [
        theta * block.powf(3.0 / (block - 1.0)) / free,
        theta / (band * block.powi(3)),
        m1 * ln.powi(5) * psi / d as f64,
    ];
    Ok(BoundMatrix::build(
        MatrixKind::Phi,
        params,
        row,
        (ln / block).powi(3) - 1.0,
    ))
}

/// Φ with third column `psi M1 (ln d)^2 floor(ln d)^3 / d`, the exact
/// column-scaling of Λ by `(block^(3/(block-1)), block^-3, block^3)`.
pub fn phi_matrix_strict_floor(d: Dim, theta: f64, psi: f64, m1: f64) -> Result<BoundMatrix> {
    let mut phi = phi_matrix(d, theta, psi, m1)?;
    let (ln, block, _, _) = logs(d);
    let c3 = psi * m1 * ln * ln * block.powi(3) / d as f64;
    for row in &mut phi.entries {
        row[2] = c3;
    }
    phi.kind = MatrixKind::PhiStrictFloor;
    phi.floor_deviation = 0.0;
    Ok(phi)
}

/// Column multipliers taking Λ to the strict-floor Φ.
pub fn column_scaling(d: Dim) -> Result<[f64; 3]> {
    check_dim(d)?;
    let (_, block, _, _) = logs(d);
    Ok([
        block.powf(3.0 / (block - 1.0)),
        block.powi(-3),
        block.powi(3),
    ])
}

/// Smallest `M1` with `M1 (ln d)^2 / d >= A + B`, where
/// `A = block^2 / (2(d - band) - block)` and `B = 1/band + M2/band^2`.
pub fn m1_from_m2(d: Dim, m2: f64) -> Result<f64> {
    check_dim(d)?;
    if !(m2.is_finite() && m2 >= 0.0) {
        return Err(Error::Validation(format!(
            "M2 must be finite and nonnegative, got {m2}"
        )));
    }
    let (ln, block, band, free) = logs(d);
    let a = block * block / free;
    let b = 1.0 / band + m2 / (band * band);
    Ok(d as f64 * (a + b) / (ln * ln))
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_add(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += b[i][j];
        }
    }
    out
}

/// `psi * sum_{0 <= k <= 2^doublings} sum_j m^k(1, j)`, by repeated doubling
/// `S <- S + P S`, `P <- P^2` from `S = P = m`, plus the identity term.
pub fn truncated_series(m: &BoundMatrix, psi: f64, doublings: u32) -> f64 {
    let mut s = m.entries;
    let mut p = m.entries;
    for _ in 0..doublings {
        if p.iter().flatten().all(|&x| x == 0.0) {
            break;
        }
        s = mat_add(&s, &mat_mul(&p, &s));
        p = mat_mul(&p, &p);
    }
    // Row 1 of the identity contributes 1.
    psi * (1.0 + s[0].iter().sum::<f64>())
}

/// `psi * sum_{k >= 0} sum_j m^k(1, j)`, infinite when the row sum is at least 1.
///
/// The closed form `psi / (1 - s)` relies on identical rows; it is checked
/// against the truncated power series on every call.
pub fn series_total(m: &BoundMatrix, psi: f64) -> f64 {
    let s = m.row_sum();
    if s >= 1.0 {
        return f64::INFINITY;
    }
    let closed = psi / (1.0 - s);
    if m.has_identical_rows() {
        let truncated = truncated_series(m, psi, 64);
        let tol = closed * 1e-10_f64.max(1e-14 / (1.0 - s));
        assert!(
            (closed - truncated).abs() <= tol,
            "series closed form {closed} disagrees with truncated powers {truncated}"
        );
        closed
    } else {
        truncated_series(m, psi, 64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    #[serde(with = "dim_serde")]
    pub d: Dim,
    pub p: f64,
    pub r: f64,
    pub m1: f64,
    pub lambda: f64,
    pub theta: f64,
    pub psi: f64,
    pub row_sum: f64,
    pub series_total: f64,
    pub certified: bool,
    /// `1 / series_total` when certified.
    pub survival_lower_bound: Option<f64>,
}

/// Certifies `lambda_c(d) <= r / (2dp)` when the Φ row sum at
/// `lambda = r/(2dp)`, `theta = (lambda+1)/(lambda p)`, `psi = 2/p` is below 1.
pub fn certify_upper_bound(d: Dim, p: f64, r: f64, m1: f64) -> Result<Certification> {
    check_probability("p", p)?;
    check_positive("M1", m1)?;
    if !(r.is_finite() && r > 1.0) {
        return Err(Error::Validation(format!(
            "r must exceed 1 (the row sum tends to 1/r), got {r}"
        )));
    }
    check_dim(d)?;
    let lambda = r / (2.0 * d as f64 * p);
    let theta = (lambda + 1.0) / (lambda * p);
    let psi = 2.0 / p;
    let phi = phi_matrix(d, theta, psi, m1)?;
    let row_sum = phi.row_sum();
    let total = series_total(&phi, psi);
    let certified = row_sum < 1.0;
    Ok(Certification {
        d,
        p,
        r,
        m1,
        lambda,
        theta,
        psi,
        row_sum,
        series_total: total,
        certified,
        survival_lower_bound: certified.then(|| 1.0 / total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum M1Rule {
    Fixed(f64),
    FromM2(f64),
}

impl M1Rule {
    pub fn resolve(&self, d: Dim) -> Result<f64> {
        match *self {
            M1Rule::Fixed(m1) => {
                check_positive("M1", m1)?;
                Ok(m1)
            }
            M1Rule::FromM2(m2) => m1_from_m2(d, m2),
        }
    }
}

pub fn certify_with_rule(d: Dim, p: f64, r: f64, rule: M1Rule) -> Result<Certification> {
    certify_upper_bound(d, p, r, rule.resolve(d)?)
}

/// Smallest `d <= d_max` whose certification succeeds, located by a doubling
/// scan followed by bisection between the last failing and first succeeding
/// dimension. The result `d*` always satisfies `certified(d*)` and, when
/// `d* > 8`, `!certified(d* - 1)`.
pub fn min_certified_dimension(r: f64, p: f64, rule: M1Rule, d_max: Dim) -> Result<Option<Dim>> {
    check_dim(d_max)?;
    let ok = |d: Dim| -> Result<bool> { Ok(certify_with_rule(d, p, r, rule)?.certified) };
    if ok(MIN_DIM)? {
        return Ok(Some(MIN_DIM));
    }
    let mut lo = MIN_DIM;
    let mut hi = None;
    let mut d = MIN_DIM;
    while d < d_max {
        d = d.saturating_mul(2).min(d_max);
        if ok(d)? {
            hi = Some(d);
            break;
        }
        lo = d;
    }
    let Some(mut hi) = hi else {
        return Ok(None);
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// `n` dimensions spaced geometrically over `[lo, hi]`, each rounded to four
/// significant digits and deduplicated.
pub fn log_spaced(lo: Dim, hi: Dim, n: usize) -> Vec<Dim> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).log10(), (hi as f64).log10());
    let mut out: Vec<Dim> = (0..n)
        .map(|i| {
            let e = a + (b - a) * i as f64 / (n - 1) as f64;
            let mag = (e.floor() as i32 - 3).max(0) as u32;
            let mantissa = 10f64.powf(e - mag as f64).round() as Dim;
            (mantissa * (10 as Dim).pow(mag)).clamp(lo, hi)
        })
        .collect();
    out[0] = lo;
    out[n - 1] = hi;
    out.dedup();
    out
}

pub fn scan(dims: &[Dim], p: f64, r: f64, rule: M1Rule) -> Result<Vec<Certification>> {
    use rayon::prelude::*;
    dims.par_iter()
        .map(|&d| certify_with_rule(d, p, r, rule))
        .collect()
}

/// CSV with columns `d,row_sum,certified,survival_lb`.
pub fn scan_csv(rows: &[Certification]) -> String {
    let mut out = String::from("d,row_sum,certified,survival_lb\n");
    for c in rows {
        let lb = c
            .survival_lower_bound
            .map(|x| x.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", c.d, c.row_sum, c.certified, lb));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_dimensions_rejected() {
        assert!(lambda_matrix(7, 1.0, 1.0, 1.0).is_err());
        assert!(phi_matrix(2, 1.0, 1.0, 1.0).is_err());
        assert!(lambda_matrix(8, 1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn lambda_structure() {
        let zero = lambda_matrix(100, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(zero.column(0), [0.0; 3]);
        assert_eq!(zero.column(1), [0.0; 3]);
        let a = lambda_matrix(1000, 1.5, 2.0, 3.0).unwrap();
        let b = lambda_matrix(1000, 3.0, 2.0, 3.0).unwrap();
        assert!(a.has_identical_rows());
        assert_eq!(b.row(0)[0], 2.0 * a.row(0)[0]);
        assert_eq!(b.row(0)[1], 2.0 * a.row(0)[1]);
        assert_eq!(b.row(0)[2], a.row(0)[2]);
    }

    #[test]
    fn lambda_at_one_million() {
        let m = lambda_matrix(1_000_000, 1.0, 1.0, 1.0).unwrap();
        // floor(ln 1e6) = 13, floor(1e6 / 13.8155...) = 72382.
        let expected = 1.0 / (2.0 * (1_000_000.0 - 72_382.0) - 13.0);
        assert!((m.row(0)[0] - expected).abs() < 1e-18);
        assert_eq!(m.row(0)[1], 1.0 / 72_382.0);
    }

    #[test]
    fn phi_scaling_identity() {
        for d in [8u128, 20, 1000, 123_456, 10u128.pow(12)] {
            let lam = lambda_matrix(d, 1.7, 2.3, 4.0).unwrap();
            let phi = phi_matrix(d, 1.7, 2.3, 4.0).unwrap();
            let strict = phi_matrix_strict_floor(d, 1.7, 2.3, 4.0).unwrap();
            let scale = column_scaling(d).unwrap();
            let block = (d as f64).ln().floor();
            assert_eq!(phi.row(0)[1], lam.row(0)[1] / block.powi(3));
            for j in 0..3 {
                let ratio = strict.row(0)[j] / lam.row(0)[j];
                assert!((ratio / scale[j] - 1.0).abs() < 1e-12);
            }
            let printed_ratio = phi.row(0)[2] / strict.row(0)[2];
            assert!((printed_ratio - 1.0 - phi.floor_deviation).abs() < 1e-12);
            assert!(phi.floor_deviation >= 0.0);
        }
        let zero = phi_matrix(50, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(zero.row_sum(), 0.0);
    }

    #[test]
    fn m1_defining_equation() {
        for d in [8u128, 100, 10_000, 10u128.pow(9)] {
            for m2 in [0.0, 1.0, 50.0] {
                let m1 = m1_from_m2(d, m2).unwrap();
                assert!(m1 > 0.0);
                let (ln, block, band, free) = logs(d);
                let target = block * block / free + 1.0 / band + m2 / (band * band);
                assert!((m1 * ln * ln / d as f64 - target).abs() <= 1e-12 * target);
            }
        }
    }

    #[test]
    fn series_examples() {
        let zero = BoundMatrix::identical_rows([0.0; 3]).unwrap();
        assert_eq!(series_total(&zero, 2.5), 2.5);
        let a = 0.6;
        let m = BoundMatrix::identical_rows([a / 3.0; 3]).unwrap();
        assert!((series_total(&m, 1.5) - 1.5 / (1.0 - a)).abs() < 1e-12);
        let one = BoundMatrix::identical_rows([0.5, 0.25, 0.25]).unwrap();
        assert!(series_total(&one, 1.0).is_infinite());
    }

    #[test]
    fn r_at_most_one_rejected() {
        assert!(certify_upper_bound(1000, 1.0, 1.0, 1.0).is_err());
        assert!(certify_upper_bound(1000, 1.0, 0.5, 1.0).is_err());
        assert!(certify_upper_bound(1000, 0.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn certified_iff_row_sum_below_one() {
        for e in [3, 10, 30, 36] {
            let d = 10u128.pow(e);
            let c = certify_with_rule(d, 1.0, 1.2, M1Rule::FromM2(50.0)).unwrap();
            assert_eq!(c.certified, c.row_sum < 1.0);
            if let Some(lb) = c.survival_lower_bound {
                assert!(lb > 0.0 && lb <= 1.0);
            }
        }
    }

    #[test]
    fn min_dimension_guard_and_r_monotone() {
        let rule = M1Rule::FromM2(50.0);
        let dmax = 10u128.pow(38);
        let slow = min_certified_dimension(1.2, 1.0, rule, dmax)
            .unwrap()
            .unwrap();
        let fast = min_certified_dimension(2.0, 1.0, rule, dmax)
            .unwrap()
            .unwrap();
        assert!(fast <= slow);
        for d in [slow, fast] {
            let r = if d == slow { 1.2 } else { 2.0 };
            assert!(certify_with_rule(d, 1.0, r, rule).unwrap().certified);
            assert!(!certify_with_rule(d - 1, 1.0, r, rule).unwrap().certified);
        }
        assert_eq!(min_certified_dimension(1.2, 1.0, rule, 1000).unwrap(), None);
    }

    #[test]
    fn log_spacing() {
        let v = log_spaced(10, 1000, 3);
        assert_eq!(v, vec![10, 100, 1000]);
        let big = log_spaced(1000, 10u128.pow(38), 36);
        assert!(big.contains(&10u128.pow(18)));
        assert!(big.contains(&10u128.pow(37)));
        assert_eq!(log_spaced(5, 5, 4), vec![5]);
    }

    #[test]
    fn wide_dimensions_round_trip_json() {
        let c = certify_upper_bound(10u128.pow(36), 1.0, 1.2, 1.0).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(
            v["d"],
            serde_json::json!("1000000000000000000000000000000000000")
        );
        let back: Certification = serde_json::from_value(v).unwrap();
        assert_eq!(back.d, c.d);
        let small =
            serde_json::to_value(certify_upper_bound(1000, 1.0, 1.2, 1.0).unwrap()).unwrap();
        assert_eq!(small["d"], serde_json::json!(1000));
    }

    #[test]
    fn csv_header() {
        let rows = scan(&[1000], 1.0, 1.2, M1Rule::Fixed(1.0)).unwrap();
        let csv = scan_csv(&rows);
        assert!(csv.starts_with("d,row_sum,certified,survival_lb\n1000,"));
    }
}
