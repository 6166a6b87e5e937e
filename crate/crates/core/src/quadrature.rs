//! Composite Simpson quadrature and small dense-vector helpers.

/// Composite Simpson rule on `[a, b]` with `subintervals` panels (rounded up to even).
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, subintervals: usize) -> f64 {
    let n = even_panels(subintervals);
    if b == a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let v = f(a + i as f64 * h);
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// Simpson weights for `n` panels (n + 1 nodes) of width `h`.
pub fn simpson_weights(subintervals: usize, h: f64) -> Vec<f64> {
    let n = even_panels(subintervals);
    (0..=n)
        .map(|i| {
            let c = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

pub(crate) fn even_panels(n: usize) -> usize {
    let n = n.max(2);
    n + n % 2
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
