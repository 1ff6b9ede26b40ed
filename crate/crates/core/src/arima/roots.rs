use num_complex::Complex64;

/// Roots of `c[0] + c[1] z + … + c[n] z^n` by Durand–Kerner iteration.
pub fn polynomial_roots(coefs: &[f64]) -> Vec<Complex64> {
    let degree = coefs.len().saturating_sub(1);
    if degree == 0 {
        return Vec::new();
    }
    let lead = coefs[degree];
    let monic: Vec<f64> = coefs.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| monic.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-14 {
            break;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_roots() {
        // (z - 2)(z + 0.5) = z^2 - 1.5 z - 1
        let mut r: Vec<f64> = polynomial_roots(&[-1.0, -1.5, 1.0]).iter().map(|c| c.re).collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((r[0] + 0.5).abs() < 1e-10 && (r[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn complex_pair() {
        // z^2 + 1
        let r = polynomial_roots(&[1.0, 0.0, 1.0]);
        assert!(r.iter().all(|z| (z.norm() - 1.0).abs() < 1e-10 && z.re.abs() < 1e-10));
    }
}
