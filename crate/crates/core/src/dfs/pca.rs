//! Leading principal component of a complex CSI matrix by power iteration
//! on its Gram matrix.

use num_complex::Complex64;
use rand::Rng;

use super::CsiMatrix;
use crate::error::{Error, Result};
use crate::nn::gemm::gemm;
use crate::rng::{derive_rng, TAG_PCA};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 5000;
pub const DEFAULT_START_SEED: u64 = 0x5043_4131;

/// Projection of the CSI matrix onto its leading right singular vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalSeries {
    pub data: Vec<Complex64>,
    pub sigma1: f64,
    /// Leading right singular vector after the phase convention.
    pub direction: Vec<Complex64>,
    pub iterations: usize,
}

/// `FᴴF` for a row-major `rows × cols` matrix.
///
/// With `F = A + iB`, the real part is `AᵀA + BᵀB` and the imaginary part
/// is `AᵀB − (AᵀB)ᵀ`. The upper triangle is kept and mirrored so the result
/// is exactly Hermitian.
pub fn gram_matrix(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let re: Vec<f64> = data.iter().map(|z| z.re).collect();
    let im: Vec<f64> = data.iter().map(|z| z.im).collect();
    let mut real = vec![0.0; cols * cols];
    let mut cross = vec![0.0; cols * cols];
    gemm(cols, rows, cols, 1.0, &re, true, &re, false, 0.0, &mut real);
    gemm(cols, rows, cols, 1.0, &im, true, &im, false, 1.0, &mut real);
    gemm(cols, rows, cols, 1.0, &re, true, &im, false, 0.0, &mut cross);
    let mut g = vec![Complex64::new(0.0, 0.0); cols * cols];
    for i in 0..cols {
        g[i * cols + i] = Complex64::new(real[i * cols + i], 0.0);
        for j in i + 1..cols {
            let z = Complex64::new(real[i * cols + j], cross[i * cols + j] - cross[j * cols + i]);
            g[i * cols + j] = z;
            g[j * cols + i] = z.conj();
        }
    }
    g
}

fn mat_vec(g: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = g[i * n..(i + 1) * n]
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum();
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Rotates `v` so its largest-modulus entry is real and positive. Ties go to
/// the lowest index.
pub fn apply_phase_convention(v: &mut [Complex64]) {
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() {
            best = i;
        }
    }
    let pivot = v[best];
    if pivot.norm() == 0.0 {
        return;
    }
    let rot = pivot.conj() / pivot.norm();
    v.iter_mut().for_each(|z| *z *= rot);
}

/// Dominant eigenpair of a Hermitian positive semi-definite matrix.
///
/// Returns `(eigenvalue, unit eigenvector, iterations)`. Convergence is
/// declared when `‖Gv − λv‖ ≤ tol·‖Gv‖`.
pub fn dominant_eigenpair(
    g: &[Complex64],
    n: usize,
    tol: f64,
    max_iter: usize,
    start_seed: u64,
) -> Result<(f64, Vec<Complex64>, usize)> {
    if g.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::domain("principal component of a zero matrix"));
    }
    let mut rng = derive_rng(start_seed, &[TAG_PCA, n as u64]);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);

    let mut gv = vec![Complex64::new(0.0, 0.0); n];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        mat_vec(g, &v, &mut gv);
        let lambda: f64 = v.iter().zip(&gv).map(|(a, b)| (a.conj() * b).re).sum();
        let gnorm = norm(&gv);
        if gnorm == 0.0 {
            // Start vector in the null space; restart along a coordinate axis.
            v.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            v[iter % n] = Complex64::new(1.0, 0.0);
            continue;
        }
        residual = gv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b * lambda).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / gnorm;
        for (dst, src) in v.iter_mut().zip(&gv) {
            *dst = src / gnorm;
        }
        if residual <= tol {
            mat_vec(g, &v, &mut gv);
            let lambda: f64 = v.iter().zip(&gv).map(|(a, b)| (a.conj() * b).re).sum();
            return Ok((lambda.max(0.0), v, iter));
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// `c = F·v₁` with `v₁` the leading right singular vector of `F`.
pub fn first_principal_component(
    f: &CsiMatrix,
    tol: f64,
    max_iter: usize,
    start_seed: u64,
) -> Result<PrincipalSeries> {
    let g = gram_matrix(&f.data, f.rows, f.cols);
    let (lambda, mut v, iterations) = dominant_eigenpair(&g, f.cols, tol, max_iter, start_seed)?;
    apply_phase_convention(&mut v);
    let data = (0..f.rows)
        .map(|r| {
            f.data[r * f.cols..(r + 1) * f.cols]
                .iter()
                .zip(&v)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    Ok(PrincipalSeries {
        data,
        sigma1: lambda.sqrt(),
        direction: v,
        iterations,
    })
}
