//! Subspace geometry over sentence embeddings.
//!
//! The conceptual plane is fitted through the embeddings of two reference
//! interpretations and a generated literal equivalent. A model interpretation
//! is then scored by its perpendicular distance to that plane (`d_p`), by the
//! dihedral cosine between the conceptual plane and the plane it forms with
//! the two references (`|cos θ|`), and by its summed cosine to the references
//! (`Ad`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norms below this are treated as zero vectors.
pub const ZERO_NORM_TOL: f64 = 1e-12;
/// Singular values below `RANK_REL_TOL * sigma_max` do not count towards rank.
pub const RANK_REL_TOL: f64 = 1e-8;
/// Basis vectors returned by [`svd_subspace`] are orthonormal to this tolerance.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Components orthogonal to the shared reference edge shorter than this are degenerate.
pub const EDGE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("non-finite value at coordinate {0}")]
    NonFinite(usize),
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("requested {k} basis vectors from {rows} rows of dimension {dim}")]
    InvalidRank { k: usize, rows: usize, dim: usize },
    #[error("numerical rank {rank} is below the requested {k}")]
    RankDeficient { rank: usize, k: usize },
    #[error("reference points are collinear and do not determine a plane")]
    CollinearReferences,
    #[error("the two references coincide, so the planes share no edge")]
    SharedEdgeDegenerate,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least two observations are required, got {0}")]
    TooFewObservations(usize),
    #[error("series has zero rank variance")]
    ConstantSeries,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A dense embedding with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbedVector(Vec<f64>);

impl EmbedVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(GeometryError::DimensionTooSmall(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for EmbedVector {
    type Error = GeometryError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbedVector> for Vec<f64> {
    fn from(v: EmbedVector) -> Self {
        v.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a - coef * b`, in place.
fn axpy_neg(a: &mut [f64], coef: f64, b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x -= coef * y;
    }
}

fn same_dims(vs: &[&EmbedVector]) -> Result<usize> {
    let first = vs[0];
    for v in &vs[1..] {
        first.check_dim(v)?;
    }
    Ok(first.dim())
}

fn raw_cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = (norm(u), norm(v));
    if nu < ZERO_NORM_TOL || nv < ZERO_NORM_TOL {
        return Err(GeometryError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &EmbedVector, v: &EmbedVector) -> Result<f64> {
    u.check_dim(v)?;
    raw_cosine(&u.0, &v.0)
}

/// One-sided Jacobi SVD of the matrix whose rows are `rows`.
///
/// Plane rotations orthogonalize the rows in place; afterwards the row norms
/// are the singular values and the normalized rows are the corresponding
/// right singular vectors. Returns `(sigma, direction)` pairs sorted by
/// decreasing sigma; directions of zero rows are left unnormalized.
fn jacobi_right_singular(rows: &[EmbedVector]) -> Vec<(f64, Vec<f64>)> {
    const MAX_SWEEPS: usize = 100;
    let mut cols: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let n = cols.len();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0
                    || beta == 0.0
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (head, tail) = cols.split_at_mut(q);
                for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut out: Vec<(f64, Vec<f64>)> = cols
        .into_iter()
        .map(|mut v| {
            let sigma = norm(&v);
            if sigma > 0.0 {
                v.iter_mut().for_each(|x| *x /= sigma);
            }
            (sigma, v)
        })
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Top-`k` right singular vectors of the matrix whose rows are `rows`.
///
/// Each returned vector is oriented so that its largest-magnitude coordinate
/// is positive, which makes the basis reproducible across runs.
pub fn svd_subspace(rows: &[EmbedVector], k: usize) -> Result<Vec<EmbedVector>> {
    if rows.is_empty() {
        return Err(GeometryError::InvalidRank { k, rows: 0, dim: 0 });
    }
    let refs: Vec<&EmbedVector> = rows.iter().collect();
    let dim = same_dims(&refs)?;
    if k == 0 || k > rows.len().min(dim) {
        return Err(GeometryError::InvalidRank {
            k,
            rows: rows.len(),
            dim,
        });
    }

    let decomposition = jacobi_right_singular(rows);
    let sigma_max = decomposition[0].0;
    let rank = if sigma_max <= 0.0 {
        0
    } else {
        decomposition
            .iter()
            .filter(|(s, _)| *s >= RANK_REL_TOL * sigma_max)
            .count()
    };
    if rank < k {
        return Err(GeometryError::RankDeficient { rank, k });
    }

    let basis = decomposition
        .into_iter()
        .take(k)
        .map(|(_, mut v)| {
            let pivot = v
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0);
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            EmbedVector(v)
        })
        .collect();
    Ok(basis)
}

/// Whether a plane is fitted through mean-centered points or through the origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneMode {
    /// Affine plane containing the three defining points.
    #[default]
    Centered,
    /// Linear subspace spanned by the raw rows.
    Uncentered,
}

impl std::str::FromStr for PlaneMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "centered" => Ok(Self::Centered),
            "uncentered" => Ok(Self::Uncentered),
            other => Err(format!(
                "unknown geometry mode `{other}` (expected centered|uncentered)"
            )),
        }
    }
}

/// How `cos θ` between the conceptual and interpretation planes is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CosineMode {
    /// Dihedral angle along the shared reference edge.
    #[default]
    Dihedral,
    /// Largest principal angle between the two fitted plane bases.
    PrincipalAngles,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryConfig {
    #[serde(default)]
    pub mode: PlaneMode,
    #[serde(default)]
    pub cosine: CosineMode,
}

/// Anchor point plus an orthonormal pair of direction vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePlane {
    pub anchor: EmbedVector,
    pub basis: [EmbedVector; 2],
    pub mode: PlaneMode,
}

impl AffinePlane {
    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }

    /// Component of `m - anchor` orthogonal to the plane.
    pub fn residual(&self, m: &EmbedVector) -> Result<Vec<f64>> {
        self.anchor.check_dim(m)?;
        let mut r = sub(&m.0, &self.anchor.0);
        // Two passes of modified Gram-Schmidt keep the residual orthogonal
        // to the basis even when `m` lies almost inside the plane.
        for _ in 0..2 {
            for b in &self.basis {
                let c = dot(&r, &b.0);
                axpy_neg(&mut r, c, &b.0);
            }
        }
        Ok(r)
    }
}

/// Fits the plane through `r1`, `r2` and `s`.
pub fn fit_plane(
    r1: &EmbedVector,
    r2: &EmbedVector,
    s: &EmbedVector,
    mode: PlaneMode,
) -> Result<AffinePlane> {
    let dim = same_dims(&[r1, r2, s])?;
    let (anchor, rows) = match mode {
        PlaneMode::Centered => {
            let centroid: Vec<f64> = (0..dim)
                .map(|j| (r1.0[j] + r2.0[j] + s.0[j]) / 3.0)
                .collect();
            let rows = [r1, r2, s]
                .iter()
                .map(|p| EmbedVector(sub(&p.0, &centroid)))
                .collect::<Vec<_>>();
            (EmbedVector(centroid), rows)
        }
        PlaneMode::Uncentered => (
            EmbedVector::zeros(dim),
            vec![r1.clone(), r2.clone(), s.clone()],
        ),
    };
    let mut basis = svd_subspace(&rows, 2).map_err(|e| match e {
        GeometryError::RankDeficient { .. } => GeometryError::CollinearReferences,
        other => other,
    })?;
    let b2 = basis.pop().expect("two basis vectors");
    let b1 = basis.pop().expect("two basis vectors");
    Ok(AffinePlane {
        anchor,
        basis: [b1, b2],
        mode,
    })
}

/// Distance from `m` to its orthogonal projection on `plane` (`d_p`).
pub fn perpendicular_distance(plane: &AffinePlane, m: &EmbedVector) -> Result<f64> {
    Ok(norm(&plane.residual(m)?))
}

/// Degenerate configurations that force a metric to its fallback value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    #[default]
    None,
    /// The interpretation lies on the line through the two references;
    /// `cos θ` is reported as 1.
    MEqualsAnchor,
    /// The references and the literal sentence are collinear. Scoring
    /// fails with [`GeometryError::CollinearReferences`], so this flag only
    /// appears in exclusion reports.
    CollinearReferences,
}

/// `|cos θ|` of the dihedral angle between plane(r1, r2, s) and plane(r1, r2, m)
/// along their shared edge r1-r2.
pub fn dihedral_cosine(
    r1: &EmbedVector,
    r2: &EmbedVector,
    s: &EmbedVector,
    m: &EmbedVector,
) -> Result<(f64, Degeneracy)> {
    same_dims(&[r1, r2, s, m])?;
    let mut edge = sub(&r2.0, &r1.0);
    let edge_len = norm(&edge);
    if edge_len < ZERO_NORM_TOL {
        return Err(GeometryError::SharedEdgeDegenerate);
    }
    edge.iter_mut().for_each(|x| *x /= edge_len);

    let off_edge = |p: &EmbedVector| {
        let mut v = sub(&p.0, &r1.0);
        let c = dot(&v, &edge);
        axpy_neg(&mut v, c, &edge);
        v
    };
    let v_s = off_edge(s);
    if norm(&v_s) < EDGE_TOL {
        return Err(GeometryError::CollinearReferences);
    }
    let v_m = off_edge(m);
    if norm(&v_m) < EDGE_TOL {
        return Ok((1.0, Degeneracy::MEqualsAnchor));
    }
    Ok((raw_cosine(&v_s, &v_m)?.abs(), Degeneracy::None))
}

/// Cosine of the largest principal angle between two planes' direction spaces.
///
/// Planes fitted through a shared edge always have a zero first principal
/// angle, so the informative quantity is the second one.
pub fn principal_angle_cosine(a: &AffinePlane, b: &AffinePlane) -> Result<f64> {
    a.anchor.check_dim(&b.anchor)?;
    let m = [
        [
            dot(&a.basis[0].0, &b.basis[0].0),
            dot(&a.basis[0].0, &b.basis[1].0),
        ],
        [
            dot(&a.basis[1].0, &b.basis[0].0),
            dot(&a.basis[1].0, &b.basis[1].0),
        ],
    ];
    // Singular values of a 2x2 matrix: s1^2 + s2^2 = |M|_F^2 and s1 * s2 = |det M|.
    let frob = m.iter().flatten().map(|x| x * x).sum::<f64>();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs();
    let disc = (frob * frob - 4.0 * det * det).max(0.0).sqrt();
    let s_max = ((frob + disc) / 2.0).sqrt();
    let s_min = if s_max > 0.0 { det / s_max } else { 0.0 };
    Ok(s_min.clamp(0.0, 1.0))
}

/// `cos(m, r1) + cos(m, r2)` (`Ad`).
pub fn adjacency_sum(m: &EmbedVector, r1: &EmbedVector, r2: &EmbedVector) -> Result<f64> {
    Ok(cosine(m, r1)? + cosine(m, r2)?)
}

/// Fractional ranks (1-based); ties share the mean of the ranks they span.
pub fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold ranks i+1..=j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of fractional ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(GeometryError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(GeometryError::TooFewObservations(xs.len()));
    }
    for v in xs.iter().chain(ys) {
        if !v.is_finite() {
            return Err(GeometryError::NonFinite(0));
        }
    }
    let rx = fractional_ranks(xs);
    let ry = fractional_ranks(ys);
    // Mean rank is always (n + 1) / 2.
    let mean = (xs.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(GeometryError::ConstantSeries);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-interpretation spatial metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialScores {
    pub d_p: f64,
    pub cos_theta: f64,
    pub ad: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_o: Option<f64>,
    pub degenerate: Degeneracy,
}

/// Scores interpretation `m` against the conceptual plane of `(r1, r2, s)`.
/// `matching_reference`, when given, yields `d_o = ‖m − R_i‖`.
pub fn score_interpretation(
    r1: &EmbedVector,
    r2: &EmbedVector,
    s: &EmbedVector,
    m: &EmbedVector,
    matching_reference: Option<&EmbedVector>,
    config: GeometryConfig,
) -> Result<SpatialScores> {
    let conceptual = fit_plane(r1, r2, s, config.mode)?;
    let d_p = perpendicular_distance(&conceptual, m)?;
    let (cos_theta, degenerate) = match config.cosine {
        CosineMode::Dihedral => dihedral_cosine(r1, r2, s, m)?,
        CosineMode::PrincipalAngles => match fit_plane(r1, r2, m, config.mode) {
            Ok(interpretation) => (
                principal_angle_cosine(&conceptual, &interpretation)?,
                Degeneracy::None,
            ),
            Err(GeometryError::CollinearReferences) => (1.0, Degeneracy::MEqualsAnchor),
            Err(e) => return Err(e),
        },
    };
    let ad = adjacency_sum(m, r1, r2)?;
    let d_o = match matching_reference {
        Some(r) => {
            r.check_dim(m)?;
            Some(norm(&sub(&m.0, &r.0)))
        }
        None => None,
    };
    Ok(SpatialScores {
        d_p,
        cos_theta,
        ad,
        d_o,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> EmbedVector {
        EmbedVector::new(xs.to_vec()).unwrap()
    }

    /// Orthonormal basis of span(rows) by classical Gram-Schmidt.
    fn gram_schmidt(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for r in rows {
            let mut w = r.clone();
            for q in &out {
                let c = dot(&w, q);
                axpy_neg(&mut w, c, q);
            }
            let n = norm(&w);
            if n > 1e-12 {
                out.push(w.iter().map(|x| x / n).collect());
            }
        }
        out
    }

    fn projector(basis: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
        let mut p = vec![vec![0.0; dim]; dim];
        for b in basis {
            for i in 0..dim {
                for j in 0..dim {
                    p[i][j] += b[i] * b[j];
                }
            }
        }
        p
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        assert_eq!(
            cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(GeometryError::ZeroVector)
        );
    }

    #[test]
    fn embed_vector_validates() {
        assert!(matches!(
            EmbedVector::new(vec![1.0]),
            Err(GeometryError::DimensionTooSmall(1))
        ));
        assert!(matches!(
            EmbedVector::new(vec![1.0, f64::NAN]),
            Err(GeometryError::NonFinite(1))
        ));
        assert!(matches!(
            cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn svd_axis_aligned() {
        let basis = svd_subspace(&[v(&[2.0, 0.0, 0.0]), v(&[0.0, 3.0, 0.0])], 2).unwrap();
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert!((b.norm() - 1.0).abs() < 1e-12);
            assert!(b.as_slice()[2].abs() < 1e-12);
        }
        assert!(dot(&basis[0].0, &basis[1].0).abs() < ORTHONORMAL_TOL);
    }

    #[test]
    fn svd_collinear_is_rank_deficient() {
        let err = svd_subspace(&[v(&[1.0, 0.0]), v(&[2.0, 0.0])], 2).unwrap_err();
        assert_eq!(err, GeometryError::RankDeficient { rank: 1, k: 2 });
    }

    #[test]
    fn svd_invalid_k() {
        assert!(matches!(
            svd_subspace(&[v(&[1.0, 0.0])], 2),
            Err(GeometryError::InvalidRank { .. })
        ));
        assert!(matches!(
            svd_subspace(&[v(&[1.0, 0.0])], 0),
            Err(GeometryError::InvalidRank { .. })
        ));
    }

    #[test]
    fn svd_projector_matches_gram_schmidt() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| {
                    let r: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n = norm(&r);
                    r.iter().map(|x| x / n).collect()
                })
                .collect();
            let emb: Vec<EmbedVector> = rows.iter().map(|r| v(r)).collect();
            let basis = svd_subspace(&emb, 3).unwrap();
            let got = projector(&basis.iter().map(|b| b.0.clone()).collect::<Vec<_>>(), 5);
            let want = projector(&gram_schmidt(&rows), 5);
            for i in 0..5 {
                for j in 0..5 {
                    assert!((got[i][j] - want[i][j]).abs() < 1e-9);
                }
            }
            // Idempotence of the rank-2 projector.
            let b2 = svd_subspace(&emb, 2).unwrap();
            let p = projector(&b2.iter().map(|b| b.0.clone()).collect::<Vec<_>>(), 5);
            for i in 0..5 {
                for j in 0..5 {
                    let pp: f64 = (0..5).map(|l| p[i][l] * p[l][j]).sum();
                    assert!((pp - p[i][j]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn fit_plane_coordinate_plane() {
        let (r1, r2, s) = (
            v(&[0.0, 0.0, 0.0]),
            v(&[2.0, 0.0, 0.0]),
            v(&[0.0, 2.0, 0.0]),
        );
        let plane = fit_plane(&r1, &r2, &s, PlaneMode::Centered).unwrap();
        for p in [&r1, &r2, &s] {
            assert!(perpendicular_distance(&plane, p).unwrap() < 1e-12);
        }
        for b in &plane.basis {
            assert!(b.as_slice()[2].abs() < 1e-12);
        }
        let d = perpendicular_distance(&plane, &v(&[1.0, 1.0, 3.0])).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_plane_collinear() {
        let err = fit_plane(
            &v(&[1.0, 0.0]),
            &v(&[2.0, 0.0]),
            &v(&[3.0, 0.0]),
            PlaneMode::Centered,
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::CollinearReferences);
    }

    #[test]
    fn fit_plane_random_self_containment() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let pts: Vec<EmbedVector> = (0..3)
                .map(|_| {
                    v(&(0..10)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect::<Vec<_>>())
                })
                .collect();
            let plane = fit_plane(&pts[0], &pts[1], &pts[2], PlaneMode::Centered).unwrap();
            let [b1, b2] = &plane.basis;
            assert!((b1.norm() - 1.0).abs() < ORTHONORMAL_TOL);
            assert!((b2.norm() - 1.0).abs() < ORTHONORMAL_TOL);
            assert!(dot(&b1.0, &b2.0).abs() < ORTHONORMAL_TOL);
            for p in &pts {
                let d = perpendicular_distance(&plane, p).unwrap();
                assert!(d < 1e-9, "{d} {:?}", plane.basis);
            }
        }
    }

    #[test]
    fn uncentered_plane_passes_through_origin() {
        let plane = fit_plane(
            &v(&[1.0, 0.0, 1.0]),
            &v(&[0.0, 1.0, 1.0]),
            &v(&[1.0, 1.0, 2.0]),
            PlaneMode::Uncentered,
        )
        .unwrap();
        assert_eq!(plane.anchor, EmbedVector::zeros(3));
        // All three rows lie in the linear span x + y = z.
        let d = perpendicular_distance(&plane, &v(&[2.0, 3.0, 5.0])).unwrap();
        assert!(d < 1e-12);
        let d = perpendicular_distance(&plane, &v(&[1.0, 1.0, -1.0])).unwrap();
        assert!((d - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dihedral_examples() {
        let (r1, r2, s) = (
            v(&[0.0, 0.0, 0.0]),
            v(&[1.0, 0.0, 0.0]),
            v(&[0.0, 1.0, 0.0]),
        );
        let (c, f) = dihedral_cosine(&r1, &r2, &s, &v(&[0.0, 0.0, 1.0])).unwrap();
        assert!(c.abs() < 1e-15);
        assert_eq!(f, Degeneracy::None);
        let (c, _) = dihedral_cosine(&r1, &r2, &s, &s).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        let (c, _) = dihedral_cosine(&r1, &r2, &s, &v(&[0.0, 1.0, 1.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn dihedral_degeneracies() {
        let (r1, r2, s) = (
            v(&[0.0, 0.0, 0.0]),
            v(&[1.0, 0.0, 0.0]),
            v(&[0.0, 1.0, 0.0]),
        );
        assert_eq!(
            dihedral_cosine(&r1, &r2, &s, &v(&[5.0, 0.0, 0.0])).unwrap(),
            (1.0, Degeneracy::MEqualsAnchor)
        );
        assert_eq!(
            dihedral_cosine(&r1, &r1, &s, &s),
            Err(GeometryError::SharedEdgeDegenerate)
        );
        assert_eq!(
            dihedral_cosine(&r1, &r2, &v(&[3.0, 0.0, 0.0]), &s),
            Err(GeometryError::CollinearReferences)
        );
    }

    #[test]
    fn principal_angles_match_dihedral_in_centered_mode() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p: Vec<EmbedVector> = (0..4)
                .map(|_| v(&(0..6).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
                .collect();
            let (dihedral, _) = dihedral_cosine(&p[0], &p[1], &p[2], &p[3]).unwrap();
            let a = fit_plane(&p[0], &p[1], &p[2], PlaneMode::Centered).unwrap();
            let b = fit_plane(&p[0], &p[1], &p[3], PlaneMode::Centered).unwrap();
            let pa = principal_angle_cosine(&a, &b).unwrap();
            assert!((dihedral - pa).abs() < 1e-9, "{dihedral} vs {pa}");
        }
    }

    #[test]
    fn adjacency_examples() {
        let e = v(&[1.0, 0.0]);
        assert_eq!(adjacency_sum(&e, &e, &e).unwrap(), 2.0);
        let ad = adjacency_sum(
            &v(&[0.0, 0.0, 1.0]),
            &v(&[1.0, 0.0, 0.0]),
            &v(&[0.0, 1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(ad, 0.0);
        let ad = adjacency_sum(
            &v(&[1.0, 1.0, 0.0]),
            &v(&[1.0, 0.0, 0.0]),
            &v(&[0.0, 1.0, 0.0]),
        )
        .unwrap();
        assert!((ad - std::f64::consts::SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0
        );
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(GeometryError::ConstantSeries)
        );
        assert_eq!(
            spearman(&[1.0], &[1.0]),
            Err(GeometryError::TooFewObservations(1))
        );
        assert_eq!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(GeometryError::LengthMismatch(2, 1))
        );
    }

    #[test]
    fn fractional_ranks_average_ties() {
        assert_eq!(
            fractional_ranks(&[10.0, 20.0, 10.0, 30.0]),
            vec![1.5, 3.0, 1.5, 4.0]
        );
        assert_eq!(fractional_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn score_interpretation_flags_and_d_o() {
        let (r1, r2, s) = (
            v(&[0.1, 0.0, 0.0]),
            v(&[1.0, 0.0, 0.0]),
            v(&[0.0, 1.0, 0.0]),
        );
        let scores =
            score_interpretation(&r1, &r2, &s, &r1, Some(&r1), GeometryConfig::default()).unwrap();
        assert!(scores.d_p < 1e-12);
        assert_eq!(scores.cos_theta, 1.0);
        assert_eq!(scores.degenerate, Degeneracy::MEqualsAnchor);
        assert_eq!(scores.d_o, Some(0.0));
    }

    #[test]
    fn plane_mode_parses() {
        assert_eq!(
            "Centered".parse::<PlaneMode>().unwrap(),
            PlaneMode::Centered
        );
        assert_eq!(
            "uncentered".parse::<PlaneMode>().unwrap(),
            PlaneMode::Uncentered
        );
        assert!("flat".parse::<PlaneMode>().is_err());
    }
}
