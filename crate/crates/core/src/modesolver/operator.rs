//! Yee-grid finite-difference operator in (Hx, Hy).
//!
//! Lengths are normalised by k0, so the eigenvalue is n_eff². On a grid of
//! `nx × ny` cells the unknowns live on
//!
//! * Y points `(i, j+½)`, `i = 1..nx-1`: Hx (and Ey),
//! * X points `(i+½, j)`, `j = 1..ny-1`: Hy (and Ex),
//!
//! with Ez on interior nodes N and Hz on cell centres C. Hx is stored before
//! Hy. The outer boundary is a perfect electric conductor.

use alloc::vec;
use alloc::vec::Vec;

use crate::sparse::{CsrMatrix, GridOrdering};

pub(crate) struct Operator {
    pub nx: usize,
    pub ny: usize,
    pub n_y: usize,
    pub n_x: usize,
    pub a: CsrMatrix,
    /// Node-space operator `C h = ∂y Hx − ∂x Hy` (proportional to Ez).
    c: CsrMatrix,
    ct: CsrMatrix,
    /// Cell-space divergence `G h = ∂x Hx + ∂y Hy`.
    g: CsrMatrix,
    gt: CsrMatrix,
    pub eps_x: Vec<f64>,
    pub eps_y: Vec<f64>,
    inv_eps_z: Vec<f64>,
}

impl Operator {
    /// `eps` is the cell permittivity, x-major; `dxs`, `dys` are k0·dx, k0·dy.
    pub fn assemble(eps: &[f64], nx: usize, ny: usize, dxs: f64, dys: f64) -> Operator {
        assert!(nx >= 2 && ny >= 2);
        assert_eq!(eps.len(), nx * ny);
        let e = |i: usize, j: usize| eps[i * ny + j];
        let n_y = (nx - 1) * ny;
        let n_x = nx * (ny - 1);
        let n_n = (nx - 1) * (ny - 1);
        let n_c = nx * ny;
        let yi = |i: usize, j: usize| (i - 1) * ny + j;
        let xi = |i: usize, j: usize| n_y + i * (ny - 1) + (j - 1);
        let ni = |i: usize, j: usize| (i - 1) * (ny - 1) + (j - 1);

        let (ix, iy) = (1.0 / dxs, 1.0 / dys);
        let mut ct = Vec::with_capacity(4 * n_n);
        for i in 1..nx {
            for j in 1..ny {
                let r = ni(i, j);
                // ∂y Hx at node (i, j): Hx(i, j-½) .. Hx(i, j+½)
                ct.push((r, yi(i, j), iy));
                ct.push((r, yi(i, j - 1), -iy));
                // −∂x Hy: Hy(i-½, j) .. Hy(i+½, j)
                ct.push((r, xi(i, j), -ix));
                ct.push((r, xi(i - 1, j), ix));
            }
        }
        let c = CsrMatrix::from_triplets(n_n, n_y + n_x, &ct);

        let mut gt = Vec::with_capacity(4 * n_c);
        for i in 0..nx {
            for j in 0..ny {
                let r = i * ny + j;
                if i + 1 < nx {
                    gt.push((r, yi(i + 1, j), ix));
                }
                if i >= 1 {
                    gt.push((r, yi(i, j), -ix));
                }
                if j + 1 < ny {
                    gt.push((r, xi(i, j + 1), iy));
                }
                if j >= 1 {
                    gt.push((r, xi(i, j), -iy));
                }
            }
        }
        let g = CsrMatrix::from_triplets(n_c, n_y + n_x, &gt);

        let mut eps_y = vec![0.0; n_y];
        for i in 1..nx {
            for j in 0..ny {
                eps_y[yi(i, j)] = 0.5 * (e(i - 1, j) + e(i, j));
            }
        }
        let mut eps_x = vec![0.0; n_x];
        for i in 0..nx {
            for j in 1..ny {
                eps_x[xi(i, j) - n_y] = 0.5 * (e(i, j - 1) + e(i, j));
            }
        }
        let mut inv_eps_z = vec![0.0; n_n];
        for i in 1..nx {
            for j in 1..ny {
                inv_eps_z[ni(i, j)] = 4.0 / (e(i - 1, j - 1) + e(i, j - 1) + e(i - 1, j) + e(i, j));
            }
        }

        let ct_m = c.transpose();
        let gt_m = g.transpose();
        let eps_t: Vec<f64> = eps_y.iter().chain(eps_x.iter()).copied().collect();
        // A = εt (I − Cᵀ εz⁻¹ C) − Gᵀ G
        let m = CsrMatrix::identity(n_y + n_x).sub(&ct_m.matmul(&c.scale_rows(&inv_eps_z)));
        let a = m.scale_rows(&eps_t).sub(&gt_m.matmul(&g));

        Operator {
            nx,
            ny,
            n_y,
            n_x,
            a,
            c,
            ct: ct_m,
            g,
            gt: gt_m,
            eps_x,
            eps_y,
            inv_eps_z,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_y + self.n_x
    }

    /// Cell that each unknown is attached to, for nested dissection.
    pub fn ordering(&self) -> GridOrdering {
        let mut cell_of = Vec::with_capacity(self.dim());
        for i in 1..self.nx {
            for j in 0..self.ny {
                cell_of.push((i as u32, j as u32));
            }
        }
        for i in 0..self.nx {
            for j in 1..self.ny {
                cell_of.push((i as u32, j as u32));
            }
        }
        GridOrdering {
            ncx: self.nx,
            ncy: self.ny,
            cell_of,
        }
    }

    /// Left eigenvector belonging to the right eigenvector `h`.
    pub fn left_vector(&self, h: &[f64]) -> Vec<f64> {
        let mut ez = self.c.mul_vec(h);
        ez.iter_mut().zip(&self.inv_eps_z).for_each(|(v, s)| *v *= s);
        let back = self.ct.mul_vec(&ez);
        h.iter().zip(&back).map(|(a, b)| a - b).collect()
    }

    /// Transverse E from H for a mode of index `n_eff`; returns (Ex on X, Ey on Y).
    pub fn e_field(&self, h: &[f64], n_eff: f64) -> (Vec<f64>, Vec<f64>) {
        let div = self.g.mul_vec(h);
        let gtg = self.gt.mul_vec(&div);
        let (hx, hy) = h.split_at(self.n_y);
        let (gy, gx) = gtg.split_at(self.n_y);
        let ex = (0..self.n_x)
            .map(|k| (n_eff * hy[k] + gx[k] / n_eff) / self.eps_x[k])
            .collect();
        let ey = (0..self.n_y)
            .map(|k| -(n_eff * hx[k] + gy[k] / n_eff) / self.eps_y[k])
            .collect();
        (ex, ey)
    }
}
