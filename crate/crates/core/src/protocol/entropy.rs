use super::ProtocolError;

fn check_dimension(d: usize) -> Result<(), ProtocolError> {
    if d < 2 {
        return Err(ProtocolError::InvalidDimension(d));
    }
    Ok(())
}

fn check_probability(x: f64) -> Result<(), ProtocolError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(ProtocolError::Domain(x));
    }
    Ok(())
}

/// `x·log2(y)` with the `0·log 0 = 0` convention.
fn xlog2(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.log2()
    }
}

/// d-dimensional Shannon entropy
/// `h(x) = -x·log2(x/(d-1)) - (1-x)·log2(1-x)`.
pub fn shannon_entropy_d(x: f64, d: usize) -> Result<f64, ProtocolError> {
    check_dimension(d)?;
    check_probability(x)?;
    Ok(-xlog2(x, x / (d - 1) as f64) - xlog2(1.0 - x, 1.0 - x))
}

/// Asymptotic secret bits per sifted photon,
/// `R = log2(d) - h(e1) - h(e2)`. Negative values mean no secure key.
pub fn secure_key_rate(e1: f64, e2: f64, d: usize) -> Result<f64, ProtocolError> {
    Ok((d as f64).log2() - shannon_entropy_d(e1, d)? - shannon_entropy_d(e2, d)?)
}

/// Symmetric error rate at which [`secure_key_rate`] reaches zero.
///
/// `R(e, e)` falls monotonically from `log2(d)` to `-log2(d)` on
/// `(0, (d-1)/d)`, so plain bisection is enough.
pub fn max_tolerated_error(d: usize) -> Result<f64, ProtocolError> {
    check_dimension(d)?;
    let f = |e: f64| (d as f64).log2() - 2.0 * shannon_entropy_d(e, d).expect("in range");
    let (mut lo, mut hi) = (0.0, (d - 1) as f64 / d as f64);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
