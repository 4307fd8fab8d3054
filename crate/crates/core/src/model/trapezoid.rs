use super::TransitionParams;

/// Trapezoid inflation at (possibly fractional) year `t`.
///
/// Zero outside `[γ0, γ3]`, linear rise on `[γ0, γ1)`, plateau `ξ` on
/// `[γ1, γ2]`, linear fall on `(γ2, γ3]`. A zero-length rise is a step up at
/// `γ0`; a zero-length fall is a step down just after `γ3`.
pub fn omega_at(p: &TransitionParams, t: f64) -> f64 {
    let g0 = p.gamma0;
    let g1 = p.gamma1();
    let g2 = p.gamma2();
    let g3 = p.gamma3();
    if t < g0 || t > g3 {
        0.0
    } else if t < g1 {
        p.xi * (t - g0) / p.lambda1
    } else if t <= g2 {
        p.xi
    } else if t >= g3 {
        0.0
    } else {
        p.xi - p.xi * (t - g2) / p.lambda3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn china() -> TransitionParams {
        TransitionParams::new(1980.0, 20.0, 11.0, 18.0, 0.114, true)
    }

    #[test]
    fn china_medians() {
        let p = china();
        assert!((omega_at(&p, 1990.0) - 0.057).abs() < 1e-15);
        assert_eq!(omega_at(&p, 1979.0), 0.0);
        assert_eq!(omega_at(&p, 2005.0), 0.114);
        assert_eq!(p.gamma3(), 2029.0);
    }

    #[test]
    fn boundaries_by_continuity() {
        let p = china();
        assert_eq!(omega_at(&p, p.gamma0), 0.0);
        assert_eq!(omega_at(&p, p.gamma1()), p.xi);
        assert_eq!(omega_at(&p, p.gamma2()), p.xi);
        assert_eq!(omega_at(&p, p.gamma3()), 0.0);
    }

    #[test]
    fn degenerate_phases() {
        let step_up = TransitionParams::new(2000.0, 0.0, 5.0, 5.0, 0.1, true);
        assert_eq!(omega_at(&step_up, 2000.0), 0.1);
        assert_eq!(omega_at(&step_up, 1999.999), 0.0);
        let step_down = TransitionParams::new(2000.0, 5.0, 5.0, 0.0, 0.1, true);
        assert_eq!(omega_at(&step_down, 2010.0), 0.1);
        assert_eq!(omega_at(&step_down, 2010.001), 0.0);
        let spike = TransitionParams::new(2000.0, 0.0, 0.0, 0.0, 0.1, true);
        assert_eq!(omega_at(&spike, 2000.0), 0.1);
    }

    #[test]
    fn area_by_quadrature() {
        let p = TransitionParams::new(1983.3, 7.2, 3.9, 12.4, 0.08, true);
        // Composite Simpson on each linear piece.
        let pieces = [p.gamma0, p.gamma1(), p.gamma2(), p.gamma3()];
        let mut area = 0.0;
        for w in pieces.windows(2) {
            let n = 1000;
            let h = (w[1] - w[0]) / n as f64;
            let f = |x: f64| omega_at(&p, x);
            let mut s = f(w[0] + 1e-13) + f(w[1] - 1e-13);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(w[0] + i as f64 * h);
            }
            area += s * h / 3.0;
        }
        let expected = p.xi * (p.lambda1 / 2.0 + p.lambda2 + p.lambda3 / 2.0);
        assert!((area - expected).abs() < 1e-9, "{area} vs {expected}");
    }
}
