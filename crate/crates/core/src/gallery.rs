//! Structured test matrices and a deterministic rectangular embedding.
//!
//! The generators reproduce a handful of classic families: Hadamard,
//! badly conditioned unit-triangular products, random orthogonal upper
//! Hessenberg, the symmetric tridiagonal with a V-shaped diagonal, dense
//! Gaussian fill, and an SVD construction with a prescribed condition number.
//! `rectangularize` turns any of them into a full-column-rank m-by-n system
//! matrix while keeping the generator block embedded verbatim.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::streams::{keyed_rng, DOMAIN_GALLERY};

/// Which structured family to generate, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    /// Sylvester Hadamard matrix; `n` must be a power of two. Entries are
    /// plus or minus one and the rows are mutually orthogonal.
    Hadamard { n: usize },
    /// Product of a unit lower and a unit upper triangular matrix with small
    /// integer off-diagonal entries. Determinant one, condition number grows
    /// rapidly with `n`.
    Golub { n: usize, seed: u64 },
    /// Random orthogonal upper Hessenberg matrix built from a chain of Givens
    /// rotations in adjacent planes.
    Rohess { n: usize, seed: u64 },
    /// Symmetric tridiagonal matrix with diagonal |i - (n-1)/2| and unit
    /// off-diagonals.
    Wilkinson { n: usize },
    /// Dense matrix with a prescribed two-norm condition number, built as
    /// U diag(sigma) V^T with log-spaced singular values.
    RandIllcond { n: usize, cond: f64, seed: u64 },
    /// Dense matrix with independent standard normal entries.
    RandDense { rows: usize, cols: usize, seed: u64 },
}

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("hadamard size {n} is not a positive power of two")]
    HadamardSize { n: usize },
    #[error("matrix dimension must be positive")]
    EmptyDimension,
    #[error("condition target {cond} must be at least 1 and finite")]
    BadConditionTarget { cond: f64 },
    #[error("rectangularize target {rows}x{cols} needs rows >= cols >= 1")]
    BadEmbeddingShape { rows: usize, cols: usize },
}

/// Builds the requested matrix. Randomized kinds are deterministic in their
/// seed.
pub fn generate(kind: &GeneratorKind) -> Result<DMatrix<f64>, GalleryError> {
    match *kind {
        GeneratorKind::Hadamard { n } => hadamard(n),
        GeneratorKind::Golub { n, seed } => golub(n, seed),
        GeneratorKind::Rohess { n, seed } => rohess(n, seed),
        GeneratorKind::Wilkinson { n } => wilkinson(n),
        GeneratorKind::RandIllcond { n, cond, seed } => rand_illcond(n, cond, seed),
        GeneratorKind::RandDense { rows, cols, seed } => rand_dense(rows, cols, seed),
    }
}

fn hadamard(n: usize) -> Result<DMatrix<f64>, GalleryError> {
    if n == 0 || !n.is_power_of_two() {
        return Err(GalleryError::HadamardSize { n });
    }
    // Sylvester closed form: sign given by the parity of popcount(i & j).
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

fn golub(n: usize, seed: u64) -> Result<DMatrix<f64>, GalleryError> {
    if n == 0 {
        return Err(GalleryError::EmptyDimension);
    }
    let mut rng = keyed_rng(seed, DOMAIN_GALLERY, 1);
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut u = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i > j {
                l[(i, j)] = rng.gen_range(-5i32..=5) as f64;
            } else if i < j {
                u[(i, j)] = rng.gen_range(-5i32..=5) as f64;
            }
        }
    }
    Ok(l * u)
}

fn rohess(n: usize, seed: u64) -> Result<DMatrix<f64>, GalleryError> {
    if n == 0 {
        return Err(GalleryError::EmptyDimension);
    }
    let mut rng = keyed_rng(seed, DOMAIN_GALLERY, 2);
    let mut a = DMatrix::<f64>::identity(n, n);
    // Left-multiply by rotations in planes (n-2, n-1) .. (0, 1); the product
    // G(0,1) G(1,2) ... G(n-2, n-1) is orthogonal and upper Hessenberg, and
    // entries below the first subdiagonal are never touched, so they stay
    // exactly zero.
    for i in (0..n.saturating_sub(1)).rev() {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        for col in 0..n {
            let top = a[(i, col)];
            let bot = a[(i + 1, col)];
            a[(i, col)] = c * top + s * bot;
            a[(i + 1, col)] = -s * top + c * bot;
        }
    }
    Ok(a)
}

fn wilkinson(n: usize) -> Result<DMatrix<f64>, GalleryError> {
    if n == 0 {
        return Err(GalleryError::EmptyDimension);
    }
    let mid = (n as f64 - 1.0) / 2.0;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = (i as f64 - mid).abs();
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
            a[(i + 1, i)] = 1.0;
        }
    }
    Ok(a)
}

fn rand_illcond(n: usize, cond: f64, seed: u64) -> Result<DMatrix<f64>, GalleryError> {
    if n == 0 {
        return Err(GalleryError::EmptyDimension);
    }
    if !(cond >= 1.0) || !cond.is_finite() {
        return Err(GalleryError::BadConditionTarget { cond });
    }
    let u = random_orthogonal(n, seed, 3);
    let v = random_orthogonal(n, seed, 4);
    // Log-spaced singular values from 1 down to 1/cond.
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let t = if n == 1 {
                0.0
            } else {
                i as f64 / (n as f64 - 1.0)
            };
            cond.powf(-t)
        } else {
            0.0
        }
    });
    Ok(u * sigma * v.transpose())
}

fn random_orthogonal(n: usize, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut rng = keyed_rng(seed, DOMAIN_GALLERY, stream);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

fn rand_dense(rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>, GalleryError> {
    if rows == 0 || cols == 0 {
        return Err(GalleryError::EmptyDimension);
    }
    let mut rng = keyed_rng(seed, DOMAIN_GALLERY, 5);
    Ok(DMatrix::from_fn(rows, cols, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }))
}

/// Embeds a generator matrix into an m-by-n system matrix of full column
/// rank. Columns are cropped, or extended with seeded Gaussian columns, to
/// width n; the result then sits as the top block above seeded Gaussian
/// fill rows. Fill entries are scaled to the generator's root-mean-square
/// entry so neither block dominates. With m = n = generator size the
/// generator is returned unchanged.
pub fn rectangularize(
    generator: &DMatrix<f64>,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<DMatrix<f64>, GalleryError> {
    if cols == 0 || rows < cols {
        return Err(GalleryError::BadEmbeddingShape { rows, cols });
    }
    let rms = {
        let n_entries = (generator.nrows() * generator.ncols()) as f64;
        let sq = generator.iter().map(|v| v * v).sum::<f64>();
        let r = (sq / n_entries).sqrt();
        if r > 0.0 {
            r
        } else {
            1.0
        }
    };
    let mut rng = keyed_rng(seed, DOMAIN_GALLERY, 6);
    let top_rows = generator.nrows().min(rows);
    let top_cols = generator.ncols().min(cols);
    let mut out = DMatrix::<f64>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = if i < top_rows && j < top_cols {
                generator[(i, j)]
            } else {
                rms * rng.sample::<f64, _>(StandardNormal)
            };
        }
    }
    Ok(out)
}
