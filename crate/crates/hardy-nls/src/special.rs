//! Modified Bessel function of the second kind and the linear tail shape.

/// `e^x K_nu(x)` and `e^x K_nu'(x)` for `x > 0`.
///
/// Uses `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`; the integrand is
/// entire in t, so the trapezoid rule converges geometrically.
pub fn bessel_k_scaled(nu: f64, x: f64) -> (f64, f64) {
    assert!(x > 0.0, "bessel_k_scaled needs x > 0");
    let h = 0.02_f64.min(0.5 / (1.0 + x.sqrt()));
    let mut k = 0.0;
    let mut dk = 0.0;
    let mut t: f64 = 0.0;
    let mut first = true;
    loop {
        let ch = t.cosh();
        let e = (-x * (ch - 1.0)).exp();
        let w = if first { 0.5 } else { 1.0 };
        first = false;
        let v = e * (nu * t).cosh();
        k += w * v;
        dk -= w * v * ch;
        if e * (nu * t).cosh() * ch < 1e-18 * k.abs() {
            break;
        }
        t += h;
    }
    (k * h, dk * h)
}

/// Decaying solution of the linearized stationary equation, normalised so
/// that `T(r) r^{(d-1)/2} e^r -> 1`. Returns `(T, T')`.
pub fn tail_shape(d: f64, nu: f64, r: f64) -> (f64, f64) {
    let (ks, dks) = bessel_k_scaled(nu, r);
    let pre = (2.0 / std::f64::consts::PI).sqrt() * r.powf(1.0 - d / 2.0) * (-r).exp();
    let t = pre * ks;
    let dt = pre * dks + (1.0 - d / 2.0) / r * t;
    (t, dt)
}

/// Leading-order tail `r^{-(d-1)/2} e^{-r}` and its derivative.
pub fn tail_leading(d: f64, r: f64) -> (f64, f64) {
    let t = r.powf(-(d - 1.0) / 2.0) * (-r).exp();
    (t, -t * (1.0 + (d - 1.0) / (2.0 * r)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_order_is_elementary() {
        // K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}
        for &x in &[0.3, 1.0, 4.0, 17.0, 30.0] {
            let (k, dk) = bessel_k_scaled(0.5, x);
            let exact = (std::f64::consts::PI / (2.0 * x)).sqrt();
            assert!((k - exact).abs() / exact < 1e-13, "x={x}");
            let dexact = -exact * (1.0 + 0.5 / x);
            assert!((dk - dexact).abs() / dexact.abs() < 1e-13);
        }
    }

    #[test]
    fn order_zero_reference() {
        // K_0(1) = 0.42102443824070833
        let (k, _) = bessel_k_scaled(0.0, 1.0);
        assert!((k * (-1f64).exp() - 0.421_024_438_240_708_3).abs() < 1e-15);
        // K_1(2) = 0.13986588181652243
        let (k, _) = bessel_k_scaled(1.0, 2.0);
        assert!((k * (-2f64).exp() - 0.139_865_881_816_522_4).abs() < 1e-15);
    }

    #[test]
    fn tail_shape_normalisation() {
        for &nu in &[0.2, 0.387, 1.1] {
            let r = 400.0;
            let (t, dt) = tail_shape(3.0, nu, r);
            let scaled = t * r * r.exp();
            assert!((scaled - 1.0).abs() < 2e-3);
            assert!((dt / t + 1.0).abs() < 5e-3);
        }
    }
}
