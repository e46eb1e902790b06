use core::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

/// Eigen-decomposition of a symmetric 3x3 matrix.
///
/// Eigenvalues are sorted in descending order and column `i` of
/// `eigenvectors` belongs to `eigenvalues[i]`. Each column is sign-normalized
/// so that its largest-magnitude component (the first one on ties) is
/// positive, which makes the output a deterministic function of the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen3 {
    pub eigenvalues: Vector3<f64>,
    pub eigenvectors: Matrix3<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;
const GAP_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-11;

/// Closed-form (trigonometric) solution with a cyclic Jacobi fallback when two
/// eigenvalues nearly coincide or the closed-form vectors are not accurate.
pub fn eig_sym3(m: &Matrix3<f64>) -> Result<SymmetricEigen3> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let norm = m.norm();
    let asym = (m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL * norm.max(1.0) {
        return Err(Error::invalid("matrix is not symmetric"));
    }
    let a = (m + m.transpose()) * 0.5;

    let (values, vectors) = match closed_form(&a, norm) {
        Some(found) => found,
        None => jacobi(&a),
    };
    Ok(finish(values, vectors))
}

fn closed_form(a: &Matrix3<f64>, norm: f64) -> Option<(Vector3<f64>, Matrix3<f64>)> {
    let q = a.trace() / 3.0;
    let b = a - Matrix3::identity() * q;
    let p2 = b.norm_squared() / 6.0;
    if p2 == 0.0 {
        return Some((Vector3::repeat(q), Matrix3::identity()));
    }
    let p = p2.sqrt();
    let r = ((b / p).determinant() * 0.5).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;

    let scale = norm.max(f64::MIN_POSITIVE);
    if l1 - l2 < GAP_TOL * scale || l2 - l3 < GAP_TOL * scale {
        return None;
    }

    let v1 = null_vector(a, l1)?;
    let v3 = null_vector(a, l3)?;
    let v3 = (v3 - v1 * v1.dot(&v3)).try_normalize(0.0)?;
    let v2 = v3.cross(&v1);
    let vectors = Matrix3::from_columns(&[v1, v2, v3]);
    let values = Vector3::new(l1, l2, l3);

    let residual = (a * vectors - vectors * Matrix3::from_diagonal(&values)).norm();
    if residual > RESIDUAL_TOL * norm.max(1.0) {
        return None;
    }
    Some((values, vectors))
}

/// Unit vector spanning the null space of `a - lambda I`, taken as the largest
/// cross product of two of its rows.
fn null_vector(a: &Matrix3<f64>, lambda: f64) -> Option<Vector3<f64>> {
    let s = a - Matrix3::identity() * lambda;
    let r0: Vector3<f64> = s.row(0).transpose();
    let r1: Vector3<f64> = s.row(1).transpose();
    let r2: Vector3<f64> = s.row(2).transpose();
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.norm_squared() > best.norm_squared() {
            best = *c;
        }
    }
    best.try_normalize(0.0)
}

fn jacobi(a: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let mut d = *a;
    let mut v = Matrix3::identity();
    let scale = a.norm();
    for _sweep in 0..64 {
        let off = d[(0, 1)].powi(2) + d[(0, 2)].powi(2) + d[(1, 2)].powi(2);
        if off <= (f64::EPSILON * f64::EPSILON * 1e-4) * scale * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = d[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (d[(q, q)] - d[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            d = rot.transpose() * d * rot;
            d[(p, q)] = 0.0;
            d[(q, p)] = 0.0;
            v *= rot;
        }
    }
    (Vector3::new(d[(0, 0)], d[(1, 1)], d[(2, 2)]), v)
}

fn finish(values: Vector3<f64>, vectors: Matrix3<f64>) -> SymmetricEigen3 {
    let mut order = [0usize, 1, 2];
    // stable sort, descending
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut eigenvalues = Vector3::zeros();
    let mut eigenvectors = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = values[src];
        let mut col: Vector3<f64> = vectors.column(src).into_owned();
        col /= col.norm();
        canonicalize_sign(&mut col);
        eigenvectors.set_column(dst, &col);
    }
    SymmetricEigen3 {
        eigenvalues,
        eigenvectors,
    }
}

fn canonicalize_sign(v: &mut Vector3<f64>) {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        *v = -*v;
    }
}
