//! Initializer families for frozen and trainable weights.
//!
//! Four families are supported: a QR-based semi-orthogonal scheme and
//! three fan-scaled uniform schemes. All draws are pure functions of the
//! supplied RNG state, which is what checkpoint replay relies on.

use super::{LinalgError, Matrix, SeededRng, Vector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Distribution family of an initializer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitFamily {
    OrthogonalUniform,
    KaimingUniform,
    XavierUniform,
    RandomUniform,
}

impl InitFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitFamily::OrthogonalUniform => "orthogonal",
            InitFamily::KaimingUniform => "kaiming",
            InitFamily::XavierUniform => "xavier",
            InitFamily::RandomUniform => "random",
        }
    }

    pub fn all() -> [InitFamily; 4] {
        [
            InitFamily::OrthogonalUniform,
            InitFamily::KaimingUniform,
            InitFamily::XavierUniform,
            InitFamily::RandomUniform,
        ]
    }
}

impl fmt::Display for InitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitFamily {
    type Err = LinalgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "orthogonal" | "orthogonal_uniform" => Ok(InitFamily::OrthogonalUniform),
            "kaiming" | "kaiming_uniform" => Ok(InitFamily::KaimingUniform),
            "xavier" | "xavier_uniform" => Ok(InitFamily::XavierUniform),
            "random" | "random_uniform" => Ok(InitFamily::RandomUniform),
            other => Err(LinalgError::Config(format!(
                "unknown init family '{other}' (expected orthogonal|kaiming|xavier|random)"
            ))),
        }
    }
}

/// An initializer family plus its scale/gain multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitKind {
    pub family: InitFamily,
    pub gain: f64,
}

impl InitKind {
    pub fn new(family: InitFamily, gain: f64) -> Result<Self, LinalgError> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(LinalgError::Config(format!(
                "init gain must be finite and > 0, got {gain}"
            )));
        }
        Ok(InitKind { family, gain })
    }

    pub fn orthogonal() -> Self {
        InitKind {
            family: InitFamily::OrthogonalUniform,
            gain: 1.0,
        }
    }

    pub fn kaiming() -> Self {
        InitKind {
            family: InitFamily::KaimingUniform,
            gain: 1.0,
        }
    }

    pub fn xavier() -> Self {
        InitKind {
            family: InitFamily::XavierUniform,
            gain: 1.0,
        }
    }

    pub fn random_uniform() -> Self {
        InitKind {
            family: InitFamily::RandomUniform,
            gain: 1.0,
        }
    }

    /// Half-width of the uniform families: kaiming `sqrt(6/fan_in)`,
    /// xavier `sqrt(6/(fan_in+fan_out))`, random `1/sqrt(fan_in)`, each
    /// multiplied by the gain. Not meaningful for the orthogonal family.
    pub fn uniform_bound(&self, fan_in: usize, fan_out: usize) -> f64 {
        let base = match self.family {
            InitFamily::KaimingUniform => (6.0 / fan_in as f64).sqrt(),
            InitFamily::XavierUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            InitFamily::RandomUniform => 1.0 / (fan_in as f64).sqrt(),
            InitFamily::OrthogonalUniform => 1.0,
        };
        self.gain * base
    }
}

impl Default for InitKind {
    fn default() -> Self {
        InitKind::orthogonal()
    }
}

/// Draw a `rows x cols` matrix. The matrix is read as mapping
/// `cols`-dimensional inputs to `rows`-dimensional outputs, so
/// `fan_in = cols` and `fan_out = rows`.
///
/// The orthogonal family is semi-orthogonal: with `rows <= cols` the rows
/// are orthonormal up to the gain (`M M^T = gain^2 I`), otherwise the
/// columns are.
pub fn init_matrix(kind: InitKind, rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "init_matrix requires rows, cols >= 1");
    match kind.family {
        InitFamily::OrthogonalUniform => semi_orthogonal(rows, cols, kind.gain, rng),
        _ => {
            let bound = kind.uniform_bound(cols, rows);
            let data = (0..rows * cols).map(|_| rng.uniform(bound)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized by construction")
        }
    }
}

/// Draw a single row/column replacement vector from the same family and
/// scale as a full `init_matrix` draw with the given fans.
///
/// For the orthogonal family this is a uniformly random direction scaled
/// by the gain — exactly the marginal distribution of one row (or column)
/// of a semi-orthogonal draw.
pub fn init_vector(
    kind: InitKind,
    len: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut SeededRng,
) -> Vector {
    assert!(len >= 1, "init_vector requires len >= 1");
    match kind.family {
        InitFamily::OrthogonalUniform => {
            let mut v = Vector::from_vec((0..len).map(|_| rng.normal()).collect());
            let norm = v.norm();
            if norm > 0.0 {
                v.scale_in_place(kind.gain / norm);
            } else {
                v.set(0, kind.gain);
            }
            v
        }
        _ => {
            let bound = kind.uniform_bound(fan_in, fan_out);
            Vector::from_vec((0..len).map(|_| rng.uniform(bound)).collect())
        }
    }
}

fn semi_orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut SeededRng) -> Matrix {
    let n = rows.max(cols);
    let m = rows.min(cols);
    let mut g = Matrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            g.set(i, j, rng.normal());
        }
    }
    let mut q = thin_qr_q(&mut g);
    if gain != 1.0 {
        q.scale_in_place(gain);
    }
    if rows <= cols {
        q.transpose()
    } else {
        q
    }
}

/// Householder QR of a tall matrix (`n x m`, `n >= m`), returning the thin
/// Q factor with the sign convention that forces the diagonal of R to be
/// nonnegative, which makes the decomposition unique for full-rank input.
/// The input is destroyed.
fn thin_qr_q(a: &mut Matrix) -> Matrix {
    let n = a.rows();
    let m = a.cols();
    debug_assert!(n >= m);
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r_diag = vec![0.0; m];
    for k in 0..m {
        let mut norm = 0.0;
        for i in k..n {
            let t = a.get(i, k);
            norm += t * t;
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if a.get(k, k) >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| a.get(i, k)).collect();
        v[0] -= alpha;
        let v_norm2: f64 = v.iter().map(|x| x * x).sum();
        if v_norm2 == 0.0 {
            r_diag[k] = alpha;
            reflectors.push(Vec::new());
            continue;
        }
        for j in k..m {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i - k] * a.get(i, j);
            }
            let coef = 2.0 * dot / v_norm2;
            for i in k..n {
                let val = a.get(i, j) - coef * v[i - k];
                a.set(i, j, val);
            }
        }
        r_diag[k] = a.get(k, k);
        reflectors.push(v);
    }
    // Accumulate Q = H_0 ... H_{m-1} applied to the first m columns of I.
    let mut q = Matrix::zeros(n, m);
    for j in 0..m {
        q.set(j, j, 1.0);
    }
    for k in (0..m).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        let v_norm2: f64 = v.iter().map(|x| x * x).sum();
        for j in 0..m {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i - k] * q.get(i, j);
            }
            let coef = 2.0 * dot / v_norm2;
            for i in k..n {
                let val = q.get(i, j) - coef * v[i - k];
                q.set(i, j, val);
            }
        }
    }
    for j in 0..m {
        if r_diag[j] < 0.0 {
            for i in 0..n {
                let val = -q.get(i, j);
                q.set(i, j, val);
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::streams;

    fn gram_rows(m: &Matrix) -> Matrix {
        m.matmul(&m.transpose()).unwrap()
    }

    #[test]
    fn orthogonal_wide_has_orthonormal_rows() {
        let mut rng = SeededRng::new(21, streams::ADAPTER_INIT);
        let m = init_matrix(InitKind::orthogonal(), 4, 8, &mut rng);
        let gram = gram_rows(&m);
        assert!(gram.max_abs_diff(&Matrix::identity(4)) <= 1e-10);
    }

    #[test]
    fn orthogonal_tall_has_orthonormal_cols() {
        let mut rng = SeededRng::new(22, streams::ADAPTER_INIT);
        let m = init_matrix(InitKind::orthogonal(), 8, 4, &mut rng);
        let gram = m.transpose().matmul(&m).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(4)) <= 1e-10);
    }

    #[test]
    fn orthogonal_gain_scales_gram() {
        let gain = 2.5;
        let kind = InitKind::new(InitFamily::OrthogonalUniform, gain).unwrap();
        let mut rng = SeededRng::new(23, streams::ADAPTER_INIT);
        let m = init_matrix(kind, 3, 6, &mut rng);
        let mut expected = Matrix::identity(3);
        expected.scale_in_place(gain * gain);
        assert!(gram_rows(&m).max_abs_diff(&expected) <= 1e-9);
    }

    #[test]
    fn same_seed_and_stream_replays_identically() {
        for family in InitFamily::all() {
            let kind = InitKind::new(family, 1.0).unwrap();
            let mut a = SeededRng::new(77, streams::ADAPTER_INIT);
            let mut b = SeededRng::new(77, streams::ADAPTER_INIT);
            let ma = init_matrix(kind, 5, 7, &mut a);
            let mb = init_matrix(kind, 5, 7, &mut b);
            assert_eq!(ma, mb);
        }
    }

    #[test]
    fn random_uniform_respects_bound_and_mean() {
        let kind = InitKind::random_uniform();
        let (rows, cols) = (40, 50);
        let bound = kind.uniform_bound(cols, rows);
        let mut rng = SeededRng::new(5, streams::ADAPTER_INIT);
        let m = init_matrix(kind, rows, cols, &mut rng);
        let n = (rows * cols) as f64;
        let mut sum = 0.0;
        for v in m.data() {
            assert!(v.abs() <= bound);
            sum += v;
        }
        // Mean of n iid uniforms has std bound/sqrt(3n); 5/sqrt(n) of the
        // bound is a generous envelope.
        let mean = sum / n;
        assert!(mean.abs() <= 5.0 * bound / n.sqrt());
    }

    #[test]
    fn uniform_bounds_follow_fan_rules() {
        let kai = InitKind::kaiming();
        let xav = InitKind::xavier();
        let run = InitKind::random_uniform();
        assert!((kai.uniform_bound(24, 7) - (6.0_f64 / 24.0).sqrt()).abs() < 1e-15);
        assert!((xav.uniform_bound(24, 8) - (6.0_f64 / 32.0).sqrt()).abs() < 1e-15);
        assert!((run.uniform_bound(16, 99) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn init_vector_orthogonal_is_unit_direction_times_gain() {
        let kind = InitKind::new(InitFamily::OrthogonalUniform, 3.0).unwrap();
        let mut rng = SeededRng::new(9, streams::REINIT);
        let v = init_vector(kind, 12, 12, 4, &mut rng);
        assert!((v.norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gain_must_be_positive() {
        assert!(InitKind::new(InitFamily::KaimingUniform, 0.0).is_err());
        assert!(InitKind::new(InitFamily::KaimingUniform, -1.0).is_err());
        assert!(InitKind::new(InitFamily::KaimingUniform, f64::NAN).is_err());
    }
}
