//! Small fixed-size symmetric eigen helpers shared by the detector and the baselines.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};

/// Eigen-decomposition of a symmetric 3x3 matrix with eigenvalues sorted
/// ascending and each eigenvector sign-normalized so that its component of
/// largest magnitude is non-negative.
pub fn sym_eigen3(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let eig = SymmetricEigen::new(symmetrize3(m));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vector3::zeros();
    let mut vectors = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut v = eig.eigenvectors.column(src).into_owned();
        normalize_sign(v.as_mut_slice());
        vectors.set_column(dst, &v);
    }
    (values, vectors)
}

/// Same contract as [`sym_eigen3`] for the full 6x6 Hessian.
pub fn sym_eigen6(m: &Matrix6<f64>) -> (Vector6<f64>, Matrix6<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2, 3, 4, 5];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vector6::zeros();
    let mut vectors = Matrix6::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut v = eig.eigenvectors.column(src).into_owned();
        normalize_sign(v.as_mut_slice());
        vectors.set_column(dst, &v);
    }
    (values, vectors)
}

fn symmetrize3(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Flip `v` so that its first component of largest magnitude is non-negative.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
