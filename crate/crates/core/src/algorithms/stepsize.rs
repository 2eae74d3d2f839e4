use crate::error::{Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
    }
    Ok(())
}

/// Horizon after which the `√(1/nT)` term dominates: `1024·L·Δ·n·τ_max/σ²`.
pub fn theory_min_iterations(n: usize, delta: f64, l: f64, sigma: f64, tau_max: u64) -> f64 {
    1024.0 * l * delta * n as f64 * tau_max as f64 / (sigma * sigma)
}

/// `η = ½ √(nΔ / (L σ² τ_max T))`, the stepsize behind the
/// `O(√(LΔσ²τ_max/(nT)))` stationarity rate.
///
/// Warns when `T` is below [`theory_min_iterations`]; errors for `σ = 0`.
pub fn theory_stepsize(n: usize, delta: f64, l: f64, sigma: f64, tau_max: u64, iterations: u64) -> Result<f64> {
    if sigma == 0.0 {
        return Err(Error::ZeroNoiseStepsize);
    }
    if n == 0 || tau_max == 0 || iterations == 0 {
        return Err(Error::invalid("n, tau_max and T must be >= 1"));
    }
    positive("delta", delta)?;
    positive("L", l)?;
    positive("sigma", sigma)?;
    let need = theory_min_iterations(n, delta, l, sigma, tau_max);
    if (iterations as f64) < need {
        log::warn!("T={iterations} is below the transient horizon {need:.0}; the rate guarantee does not apply yet");
    }
    Ok(0.5 * (n as f64 * delta / (l * sigma * sigma * tau_max as f64 * iterations as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_constants() {
        assert_eq!(theory_stepsize(1, 1.0, 1.0, 1.0, 1, 4).unwrap(), 0.25);
    }

    #[test]
    fn quadrupling_t_halves_eta() {
        let a = theory_stepsize(8, 0.3, 2.0, 0.5, 7, 1000).unwrap();
        let b = theory_stepsize(8, 0.3, 2.0, 0.5, 7, 4000).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_is_an_error() {
        let e = theory_stepsize(1, 1.0, 1.0, 0.0, 1, 4).unwrap_err();
        assert_eq!(e, Error::ZeroNoiseStepsize);
        assert!(e.to_string().contains("undefined for sigma=0"));
        assert!(theory_stepsize(1, -1.0, 1.0, 1.0, 1, 4).is_err());
    }
}
