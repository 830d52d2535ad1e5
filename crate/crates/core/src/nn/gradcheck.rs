//! Central finite-difference gradient verification.

/// Compare analytic gradients against central finite differences of `loss`
/// over every coordinate of `params`, returning the worst relative error.
///
/// The error is `|a - fd| / max(1, |a|, |fd|)`: relative for large
/// gradients, absolute near zero. `params` is restored before returning.
pub fn grad_check<F>(params: &mut [f64], analytic: &[f64], mut loss: F, h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let saved = params[i];
        params[i] = saved + h;
        let up = loss(params);
        params[i] = saved - h;
        let down = loss(params);
        params[i] = saved;
        let fd = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - fd).abs() / 1.0f64.max(a.abs()).max(fd.abs());
        worst = worst.max(rel);
    }
    worst
}
