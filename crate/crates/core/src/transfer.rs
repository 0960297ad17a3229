//! Transfer matrices of `-(p u')'/p = omega^2 u` along one edge.

use nalgebra::Matrix2;

use crate::error::SolverError;
use crate::graph::DensityProfile;

/// Maximum number of accepted plus rejected steps per integration.
pub const STEP_BUDGET: usize = 2_000_000;

const RTOL: f64 = 1e-12;
const ATOL: f64 = 1e-13;

/// Fundamental matrix of the system for `(u, p u')` from `x = 0` to `x = len`.
///
/// Columns are the solutions with data `(1, 0)` and `(0, 1)` at `x = 0`. The
/// first-order system is trace free, so the determinant is one.
pub fn transfer_matrix_edge(p: &DensityProfile, len: f64, omega: f64) -> Result<Matrix2<f64>, SolverError> {
    if !(len > 0.0) || !(omega >= 0.0) || !omega.is_finite() {
        return Err(SolverError::InvalidArgument(format!("need len > 0 and omega >= 0, got {len}, {omega}")));
    }
    if let Some(c) = p.constant_value() {
        return Ok(constant_transfer(c, len, omega));
    }
    integrate(p, len, omega)
}

/// Same propagator in `(u, u')` coordinates. Its determinant is `p(0)/p(len)`.
pub fn transfer_matrix_edge_uv(p: &DensityProfile, len: f64, omega: f64) -> Result<Matrix2<f64>, SolverError> {
    let t = transfer_matrix_edge(p, len, omega)?;
    let p0 = p.eval(0.0);
    let pl = p.eval(len);
    Ok(Matrix2::new(1.0, 0.0, 0.0, 1.0 / pl) * t * Matrix2::new(1.0, 0.0, 0.0, p0))
}

/// Closed form for constant density `c`.
pub fn constant_transfer(c: f64, len: f64, omega: f64) -> Matrix2<f64> {
    if omega == 0.0 {
        return Matrix2::new(1.0, len / c, 0.0, 1.0);
    }
    let (s, co) = (omega * len).sin_cos();
    Matrix2::new(co, s / (c * omega), -c * omega * s, co)
}

type State = [f64; 4];

fn rhs(p: &DensityProfile, omega2: f64, x: f64, y: &State) -> State {
    let px = p.eval(x);
    // columns (u1, w1), (u2, w2) with u' = w / p, w' = -omega^2 p u
    [y[1] / px, -omega2 * px * y[0], y[3] / px, -omega2 * px * y[2]]
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..4 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Dormand-Prince 5(4) with standard step-size control.
fn integrate(p: &DensityProfile, len: f64, omega: f64) -> Result<Matrix2<f64>, SolverError> {
    const C2: f64 = 1.0 / 5.0;
    const C3: f64 = 3.0 / 10.0;
    const C4: f64 = 4.0 / 5.0;
    const C5: f64 = 8.0 / 9.0;
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // error weights: fifth-order minus embedded fourth-order weights
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let omega2 = omega * omega;
    let mut x = 0.0;
    let mut y: State = [1.0, 0.0, 0.0, 1.0];
    let scale = 1.0 + omega;
    let mut h = (0.01 / scale).min(len);
    let mut k1 = rhs(p, omega2, x, &y);
    let mut steps = 0usize;

    while x < len {
        steps += 1;
        if steps > STEP_BUDGET {
            return Err(SolverError::IntegratorBudget);
        }
        let last = x + h >= len;
        if last {
            h = len - x;
        }
        let k2 = rhs(p, omega2, x + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = rhs(p, omega2, x + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(p, omega2, x + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs(p, omega2, x + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = rhs(
            p,
            omega2,
            x + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let ynew = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs(p, omega2, x + h, &ynew);

        let mut err = 0.0;
        for i in 0..4 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ATOL + RTOL * y[i].abs().max(ynew[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / 4.0).sqrt();

        if err <= 1.0 {
            x = if last { len } else { x + h };
            y = ynew;
            k1 = k7;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * len.max(1.0) {
            return Err(SolverError::IntegratorBudget);
        }
    }
    Ok(Matrix2::new(y[0], y[2], y[1], y[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_closed_forms() {
        let t = transfer_matrix_edge(&DensityProfile::Constant(1.0), 1.0, PI).unwrap();
        assert!((t - Matrix2::new(-1.0, 0.0, 0.0, -1.0)).abs().max() < 1e-15);
        let t0 = transfer_matrix_edge(&DensityProfile::Constant(1.0), 2.5, 0.0).unwrap();
        assert_eq!(t0, Matrix2::new(1.0, 2.5, 0.0, 1.0));
    }

    #[test]
    fn integrator_reproduces_constant_case() {
        // a degree-one polynomial with zero slope takes the closed-form path,
        // so force integration through a nearly constant profile instead
        let p = DensityProfile::Polynomial(vec![1.0, 1e-9]);
        let t = transfer_matrix_edge(&p, 1.0, 3.0).unwrap();
        let c = constant_transfer(1.0, 1.0, 3.0);
        assert!((t - c).abs().max() < 1e-7);
    }

    #[test]
    fn determinants() {
        let p = DensityProfile::Polynomial(vec![1.0, 2.0, 1.0]);
        for &w in &[0.0, 1.0, 7.5] {
            let t = transfer_matrix_edge(&p, 1.0, w).unwrap();
            assert!((t.determinant() - 1.0).abs() < 1e-8, "omega = {w}");
            let uv = transfer_matrix_edge_uv(&p, 1.0, w).unwrap();
            assert!((uv.determinant() - 0.25).abs() < 1e-8, "omega = {w}");
        }
    }
}
