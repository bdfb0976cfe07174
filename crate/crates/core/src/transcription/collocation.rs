/// Hermite-Simpson collocation defect between two knots:
///
/// ```text
/// x_mid = ½(x_k + x₊) + Δt/8 (f_k − f₊),   u_mid = ½(u_k + u₊)
/// defect = x₊ − x_k − Δt/6 (f_k + 4 f_mid + f₊)
/// ```
pub fn hermite_simpson_defect<F>(
    f: F,
    x_k: &[f64],
    u_k: &[f64],
    x_next: &[f64],
    u_next: &[f64],
    dt: f64,
) -> Vec<f64>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let f_k = f(x_k, u_k);
    let f_next = f(x_next, u_next);
    let x_mid: Vec<f64> = (0..x_k.len())
        .map(|i| 0.5 * (x_k[i] + x_next[i]) + dt / 8.0 * (f_k[i] - f_next[i]))
        .collect();
    let u_mid: Vec<f64> = u_k.iter().zip(u_next).map(|(a, b)| 0.5 * (a + b)).collect();
    let f_mid = f(&x_mid, &u_mid);
    (0..x_k.len())
        .map(|i| x_next[i] - x_k[i] - dt / 6.0 * (f_k[i] + 4.0 * f_mid[i] + f_next[i]))
        .collect()
}
