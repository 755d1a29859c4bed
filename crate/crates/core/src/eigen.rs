//! Shift-invert Arnoldi for a few real eigenvalues of a large nonsymmetric
//! matrix nearest a real shift.
//!
//! The caller supplies `y = (A − σI)⁻¹ x`; eigenvalues `μ` of that operator
//! map back to `λ = σ + 1/μ`. Only real Ritz values are considered, which is
//! appropriate for lossless waveguide operators whose guided spectrum is real.
//! Restarts are thick: the leading real Ritz vectors are kept as the start
//! of the next Krylov basis.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::math;
use crate::sparse::{dot, norm2};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EigenError {
    #[error("requested {0} eigenpairs from a problem of size {1}")]
    TooMany(usize, usize),
    #[error("no real Ritz values found near the shift")]
    NothingFound,
    #[error("Hessenberg eigenproblem did not converge")]
    SchurFailed,
}

#[derive(Debug, Clone)]
pub struct ArnoldiOptions {
    pub nev: usize,
    /// Krylov subspace size per cycle; raised to at least `2·nev + 10`.
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Relative residual target for the shift-inverted operator.
    pub tol: f64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        ArnoldiOptions {
            nev: 4,
            krylov_dim: 40,
            max_restarts: 30,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RitzPair {
    /// Eigenvalue of the shift-inverted operator.
    pub mu: f64,
    /// Unit 2-norm vector.
    pub vector: Vec<f64>,
    /// Estimated `‖Op·x − μ·x‖ / |μ|`.
    pub estimate: f64,
}

#[derive(Debug, Clone)]
pub struct ArnoldiResult {
    /// Ordered by decreasing |μ|, i.e. nearest to the shift first.
    pub pairs: Vec<RitzPair>,
    pub restarts: usize,
    pub converged: bool,
}

fn start_vector(n: usize) -> Vec<f64> {
    // Deterministic and without structure that could be orthogonal to a mode.
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 + 1.0) * 0.618_033_988_749_895;
            1.0 + 0.5 * (t - math::floor(t))
        })
        .collect();
    let s = norm2(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Real eigenvalues of the small Hessenberg matrix with their eigenvectors.
fn real_ritz(h: &DMatrix<f64>) -> Result<Vec<(f64, Vec<f64>)>, EigenError> {
    let m = h.nrows();
    let schur = h.clone().try_schur(f64::EPSILON, 0).ok_or(EigenError::SchurFailed)?;
    let t = schur.unpack().1;
    let hnorm = h.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    let mut k = 0;
    while k < m {
        if k + 1 < m && t[(k + 1, k)].abs() > 1e-14 * hnorm {
            // 2×2 block: complex pair
            k += 2;
            continue;
        }
        let mu = t[(k, k)];
        out.push((mu, inverse_iteration(h, mu, hnorm)));
        k += 1;
    }
    Ok(out)
}

fn inverse_iteration(h: &DMatrix<f64>, mu: f64, hnorm: f64) -> Vec<f64> {
    let m = h.nrows();
    let mut shifted = h.clone();
    let delta = hnorm * 1e-13 + mu.abs() * 1e-15;
    for i in 0..m {
        shifted[(i, i)] -= mu + delta;
    }
    let lu = shifted.lu();
    let mut y = nalgebra::DVector::from_fn(m, |i, _| 1.0 + 0.1 * i as f64);
    for _ in 0..3 {
        match lu.solve(&y) {
            Some(z) if z.iter().all(|v| v.is_finite()) => {
                let nrm = z.norm();
                if nrm == 0.0 {
                    break;
                }
                y = z / nrm;
            }
            _ => break,
        }
    }
    y.iter().copied().collect()
}

/// Runs shift-invert Arnoldi. `apply(x, y)` must write `(A − σI)⁻¹ x` into `y`.
pub fn arnoldi<F>(n: usize, opts: &ArnoldiOptions, mut apply: F) -> Result<ArnoldiResult, EigenError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if opts.nev == 0 || opts.nev > n {
        return Err(EigenError::TooMany(opts.nev, n));
    }
    let m_max = opts.krylov_dim.max(2 * opts.nev + 10).min(n);
    // Ritz vectors carried over a restart, beyond the ones asked for.
    let keep = (opts.nev + (m_max - opts.nev) / 3).min(m_max.saturating_sub(2)).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max + 1);
    basis.push(start_vector(n));
    let mut h = DMatrix::<f64>::zeros(m_max + 1, m_max);
    let mut first = 0;
    let mut w = vec![0.0; n];

    for restart in 0..=opts.max_restarts {
        let mut m = m_max;
        for j in first..m_max {
            apply(&basis[j], &mut w);
            let wnorm0 = norm2(&w);
            // classical Gram–Schmidt with one reorthogonalisation pass
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[(i, j)] += c;
                    w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
                }
            }
            let beta = norm2(&w);
            h[(j + 1, j)] = beta;
            if beta <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE) {
                m = j + 1;
                break;
            }
            basis.push(w.iter().map(|x| x / beta).collect());
        }
        let hm = h.view((0, 0), (m, m)).into_owned();
        let beta_m = h[(m, m - 1)];
        let mut ritz = real_ritz(&hm)?;
        ritz.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
        if ritz.is_empty() {
            return Err(EigenError::NothingFound);
        }
        let estimate = |mu: f64, y: &[f64]| (beta_m * y[m - 1]).abs() / mu.abs().max(f64::MIN_POSITIVE);
        let wanted = opts.nev.min(ritz.len());
        let converged = ritz.len() >= opts.nev.min(m) && ritz[..wanted].iter().all(|(mu, y)| estimate(*mu, y) < opts.tol);
        if converged || restart == opts.max_restarts || m < m_max {
            let pairs = ritz[..wanted]
                .iter()
                .map(|(mu, y)| RitzPair {
                    mu: *mu,
                    vector: combine(&basis[..m], y, n),
                    estimate: estimate(*mu, y),
                })
                .collect();
            return Ok(ArnoldiResult {
                pairs,
                restarts: restart,
                converged: converged || m < m_max,
            });
        }

        // Thick restart: compress onto the leading Ritz vectors of H. They are
        // eigenvectors of H, so A·(V Q) = (V Q)(QᵀHQ) + β v_{m+1} (e_mᵀQ) holds.
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(keep);
        for (_, y) in ritz.iter().take(keep) {
            let mut y = y.clone();
            for _ in 0..2 {
                for u in &q {
                    let c = dot(u, &y);
                    y.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
                }
            }
            let s = norm2(&y);
            if s > 1e-8 {
                y.iter_mut().for_each(|a| *a /= s);
                q.push(y);
            }
        }
        let k = q.len();
        let qm = DMatrix::from_fn(m, k, |i, j| q[j][i]);
        let hq = &hm * &qm;
        let compressed = qm.transpose() * hq;
        let mut next: Vec<Vec<f64>> = q.iter().map(|y| combine(&basis[..m], y, n)).collect();
        next.push(basis[m].clone());
        h.fill(0.0);
        for i in 0..k {
            for j in 0..k {
                h[(i, j)] = compressed[(i, j)];
            }
            h[(k, i)] = beta_m * qm[(m - 1, i)];
        }
        basis = next;
        first = k;
    }
    unreachable!()
}

fn combine(basis: &[Vec<f64>], y: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (v, &c) in basis.iter().zip(y.iter()) {
        x.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
    }
    let s = norm2(&x);
    x.iter_mut().for_each(|a| *a /= s);
    x
}
