/// Arithmetic mean with one correction pass, exact for constant input.
pub fn mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    m + values.iter().map(|v| v - m).sum::<f64>() / n
}
