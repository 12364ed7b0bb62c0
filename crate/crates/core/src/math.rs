//! Scalar math routed through `libm` so results are identical in `std` and
//! `no_std` builds.

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    sqrt(norm_sq(a))
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Scales `a` in place so its Euclidean norm is at most 1. Vectors already
/// inside the unit ball are left bit-identical.
pub fn project_unit_ball(a: &mut [f64]) {
    let n = norm(a);
    if n > 1.0 {
        let inv = 1.0 / n;
        for x in a.iter_mut() {
            *x *= inv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_leaves_interior_untouched() {
        let mut v = [0.3, -0.4];
        project_unit_ball(&mut v);
        assert_eq!(v, [0.3, -0.4]);
    }

    #[test]
    fn project_scales_to_unit_norm() {
        let mut v = [3.0, 4.0];
        project_unit_ball(&mut v);
        assert!((norm(&v) - 1.0).abs() < 1e-15);
        assert!((v[0] - 0.6).abs() < 1e-15);
    }
}
