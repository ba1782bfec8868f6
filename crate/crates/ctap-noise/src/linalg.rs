//! Dense 3x3 real-symmetric eigensolver.
//!
//! The propagator diagonalizes the (real, tridiagonal-symmetric) Hamiltonian
//! once per time step, so this is the hottest numerical kernel in the crate.
//! A cyclic Jacobi iteration is used: it is branch-light, unconditionally
//! stable, and produces an orthogonal eigenbasis to machine precision even for
//! (near-)degenerate spectra, which occur at the pulse tails where both
//! couplings are vanishingly small.
//!
//! For time stepping, consecutive Hamiltonians differ by O(dt), so the
//! eigenbasis of the previous step is an excellent starting guess. Passing it
//! back in via [`jacobi_refine`] cuts the sweep count to one or two.

/// Real symmetric 3x3 matrix, row-major.
pub type Sym3 = [[f64; 3]; 3];

/// Columns of an orthogonal 3x3 matrix: `basis[k]` is the k-th eigenvector.
pub type Basis3 = [[f64; 3]; 3];

pub const IDENTITY3: Basis3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Eigenvalues (ascending) with matching eigenvector columns.
#[derive(Debug, Clone, Copy)]
pub struct Eigen3 {
    pub values: [f64; 3],
    pub vectors: Basis3,
}

const MAX_SWEEPS: usize = 24;

#[inline]
fn off_diag_sq(a: &Sym3) -> f64 {
    a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]
}

#[inline]
fn frob_sq(a: &Sym3) -> f64 {
    let mut s = 0.0;
    for row in a {
        for &v in row {
            s += v * v;
        }
    }
    s
}

/// One Jacobi rotation zeroing `a[p][q]`, accumulated into the columns of `v`.
#[inline]
fn rotate(a: &mut Sym3, v: &mut Basis3, p: usize, q: usize) {
    let apq = a[p][q];
    if apq == 0.0 {
        return;
    }
    let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let app = a[p][p];
    let aqq = a[q][q];
    a[p][p] = app - t * apq;
    a[q][q] = aqq + t * apq;
    a[p][q] = 0.0;
    a[q][p] = 0.0;
    let r = 3 - p - q;
    let arp = a[r][p];
    let arq = a[r][q];
    a[r][p] = c * arp - s * arq;
    a[p][r] = a[r][p];
    a[r][q] = s * arp + c * arq;
    a[q][r] = a[r][q];

    for vr in v.iter_mut() {
        let vp = vr[p];
        let vq = vr[q];
        vr[p] = c * vp - s * vq;
        vr[q] = s * vp + c * vq;
    }
}

/// Diagonalize `a` starting from the orthogonal guess already held in `v`.
///
/// `v` is multiplied by the accumulated rotations (columns stay orthonormal),
/// and the eigenvalues are returned in column order of `v`, unsorted. With a
/// warm guess from a nearby matrix this converges in one or two sweeps.
pub fn jacobi_refine(a: &Sym3, v: &mut Basis3) -> [f64; 3] {
    // b = v^T a v, expected near-diagonal for a warm start.
    let mut av = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            av[i][j] = a[i][0] * v[0][j] + a[i][1] * v[1][j] + a[i][2] * v[2][j];
        }
    }
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = v[0][i] * av[0][j] + v[1][i] * av[1][j] + v[2][i] * av[2][j];
        }
    }
    // Symmetrize roundoff so the rotation formulas see an exactly symmetric input.
    for i in 0..3 {
        for j in (i + 1)..3 {
            let m = 0.5 * (b[i][j] + b[j][i]);
            b[i][j] = m;
            b[j][i] = m;
        }
    }

    let tol = f64::EPSILON * f64::EPSILON * (1.0 + frob_sq(&b));
    for _ in 0..MAX_SWEEPS {
        if off_diag_sq(&b) <= tol {
            break;
        }
        rotate(&mut b, v, 0, 1);
        rotate(&mut b, v, 0, 2);
        rotate(&mut b, v, 1, 2);
    }
    [b[0][0], b[1][1], b[2][2]]
}

/// Re-orthonormalize the columns of `v` by modified Gram-Schmidt.
///
/// A basis carried across many thousands of accumulated rotations picks up
/// roundoff at the 1e-12 level; refreshing it every few dozen steps keeps the
/// propagator unitary to better than 1e-10 over a full window.
pub fn orthonormalize(v: &mut Basis3) {
    for k in 0..3 {
        for l in 0..k {
            let dot = v[0][k] * v[0][l] + v[1][k] * v[1][l] + v[2][k] * v[2][l];
            for i in 0..3 {
                v[i][k] -= dot * v[i][l];
            }
        }
        let norm = (v[0][k] * v[0][k] + v[1][k] * v[1][k] + v[2][k] * v[2][k]).sqrt();
        for i in 0..3 {
            v[i][k] /= norm;
        }
    }
}

/// Full eigendecomposition with eigenvalues sorted ascending.
pub fn eigen_sym3(a: &Sym3) -> Eigen3 {
    let mut v = IDENTITY3;
    let mut values = jacobi_refine(a, &mut v);

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let vals = [values[order[0]], values[order[1]], values[order[2]]];
    let mut vectors = [[0.0; 3]; 3];
    for (k, &src) in order.iter().enumerate() {
        for i in 0..3 {
            vectors[i][k] = v[i][src];
        }
    }
    values = vals;
    Eigen3 { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::RngExt;

    fn random_sym(rng: &mut impl rand::Rng, scale: f64) -> Sym3 {
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let v = rng.random_range(-scale..scale);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        a
    }

    fn check_decomposition(a: &Sym3, tol: f64) {
        let e = eigen_sym3(a);
        // residual a v - lambda v
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * e.vectors[j][k]).sum();
                assert!(
                    (av - e.values[k] * e.vectors[i][k]).abs() < tol,
                    "residual too large for {a:?}"
                );
            }
        }
        // orthonormal columns
        for k in 0..3 {
            for l in 0..3 {
                let dot: f64 = (0..3).map(|i| e.vectors[i][k] * e.vectors[i][l]).sum();
                let want = if k == l { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-14);
            }
        }
        assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2]);
    }

    #[test]
    fn random_matrices_match_nalgebra() {
        let mut rng = crate::rng::derive_rng(11, &[0]);
        for _ in 0..200 {
            let a = random_sym(&mut rng, 50.0);
            check_decomposition(&a, 1e-10);
            let m = Matrix3::from_fn(|i, j| a[i][j]);
            let mut reference = m.symmetric_eigen().eigenvalues.as_slice().to_vec();
            reference.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let e = eigen_sym3(&a);
            for k in 0..3 {
                assert!(
                    (e.values[k] - reference[k]).abs() < 1e-10 * (1.0 + reference[k].abs()),
                    "eigenvalue mismatch: {:?} vs {:?}",
                    e.values,
                    reference
                );
            }
        }
    }

    #[test]
    fn degenerate_and_diagonal_cases() {
        check_decomposition(&[[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]], 1e-13);
        check_decomposition(&[[1.0, 0.0, 0.0], [0.0, 1.0, 1e-14], [0.0, 1e-14, 1.0]], 1e-13);
        check_decomposition(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], 1e-15);
        // tridiagonal with tiny couplings, the pulse-tail shape
        check_decomposition(
            &[[0.0, 1e-13, 0.0], [1e-13, 5.0, 2e-9], [0.0, 2e-9, -3.0]],
            1e-12,
        );
    }

    #[test]
    fn warm_start_refines_in_place() {
        let mut rng = crate::rng::derive_rng(12, &[0]);
        let a0 = random_sym(&mut rng, 30.0);
        let mut v = IDENTITY3;
        jacobi_refine(&a0, &mut v);
        // perturb slightly and refine from the previous basis
        let mut a1 = a0;
        for i in 0..3 {
            for j in i..3 {
                let d = rng.random_range(-0.1..0.1);
                a1[i][j] += d;
                a1[j][i] = a1[i][j];
            }
        }
        let vals = jacobi_refine(&a1, &mut v);
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a1[i][j] * v[j][k]).sum();
                assert!((av - vals[k] * v[i][k]).abs() < 1e-11);
            }
        }
    }
}
