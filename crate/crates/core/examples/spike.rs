use nalgebra::{Complex, SMatrix};
type C64 = Complex<f64>;
fn main() {
    let mut m = SMatrix::<C64, 4, 4>::zeros();
    m[(0, 0)] = C64::new(1.0, 0.0);
    m[(1, 1)] = C64::new(2.0, 0.0);
    m[(2, 2)] = C64::new(3.0, 1.0);
    m[(3, 3)] = C64::new(3.0, -1.0);
    m[(0, 1)] = C64::new(0.5, -0.25);
    m[(1, 2)] = C64::new(-1.5, 0.75);
    m[(2, 3)] = C64::new(0.1, 2.0);
    let mut p = SMatrix::<C64, 4, 4>::zeros();
    let vals = [0.3, -0.7, 1.1, 0.4, 0.9, -0.2, 0.6, 1.3, -0.5, 0.8, 0.2, -1.0, 0.7, 0.1, -0.9, 0.5];
    for i in 0..4 {
        for j in 0..4 {
            p[(i, j)] = C64::new(vals[i * 4 + j], 0.3 * vals[j * 4 + i]);
        }
        p[(i, i)] += C64::new(2.0, 0.0);
    }
    let pinv = p.try_inverse().expect("invertible");
    let dense = p * m * pinv;
    let schur = dense.schur();
    println!("eigenvalues() -> {:?}", schur.eigenvalues().map(|v| v.as_slice().to_vec()));
    let di = dense.try_inverse().expect("inv ok");
    let id = di * dense;
    let mut max_off: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let expect = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            max_off = max_off.max((id[(i, j)] - expect).norm());
        }
    }
    println!("inverse residual {max_off:.3e}");
}
