use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    /// Offset used to build the initial simplex around the start point.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_iter: 500,
            tolerance: 1e-8,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Downhill simplex minimisation. The start point is a vertex of the initial
/// simplex, so the returned value never exceeds `f(x0)`.
pub fn minimize<T: Scalar, F: FnMut(&[T]) -> T>(mut f: F, x0: &[T], opts: &NelderMeadOptions) -> Minimum<T> {
    let dim = x0.len();
    let eval = |f: &mut F, x: &[T]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };
    if dim == 0 {
        let value = eval(&mut f, x0);
        return Minimum {
            x: Vec::new(),
            value,
            iterations: 0,
            converged: true,
        };
    }
    let (alpha, gamma, rho, sigma) = (T::of(opts.reflection), T::of(opts.expansion), T::of(opts.contraction), T::of(opts.shrink));
    let tol = T::of(opts.tolerance);

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), eval(&mut f, x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] = x[i] + T::of(opts.initial_step);
        let v = eval(&mut f, &x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        // stable sort keeps the earlier vertex first on ties
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if (worst - best).abs() <= tol * (best.abs() + tol) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![T::zero(); dim];
        for (x, _) in &simplex[..dim] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c = *c + xi;
            }
        }
        let inv = T::one() / T::of_usize(dim);
        centroid.iter_mut().for_each(|c| *c = *c * inv);

        let along = |t: T, from: &[T]| -> Vec<T> {
            centroid.iter().zip(from).map(|(&c, &w)| c + t * (c - w)).collect()
        };
        let worst_x = simplex[dim].0.clone();
        let xr = along(alpha, &worst_x);
        let fr = eval(&mut f, &xr);
        if fr < best {
            let xe = along(alpha * gamma, &worst_x);
            let fe = eval(&mut f, &xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(alpha * rho, &worst_x);
            let fc = eval(&mut f, &xc);
            (xc, fc)
        } else {
            let xc = along(-rho, &worst_x);
            let fc = eval(&mut f, &xc);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<T> = anchor.iter().zip(&vertex.0).map(|(&a, &v)| a + sigma * (v - a)).collect();
            let v = eval(&mut f, &x);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let m = minimize(
            |x: &[f64]| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + 2.0,
            &[0.0, 0.0],
            &NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.5).abs() < 1e-3 && (m.x[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn rosenbrock_in_single_precision_does_not_increase() {
        let f = |x: &[f32]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let start = [-1.2f32, 1.0];
        let m = minimize(f, &start, &NelderMeadOptions::default());
        assert!(m.value <= f(&start));
    }
}
