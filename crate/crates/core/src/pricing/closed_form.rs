//! Closed-form reference values.

use super::PricingError;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn domain(name: &str, ok: bool) -> Result<(), PricingError> {
    if ok {
        Ok(())
    } else {
        Err(PricingError::Domain(name.to_string()))
    }
}

/// Discounted Black–Scholes call on a non-dividend stock.
pub fn black_scholes_call(s0: f64, strike: f64, sigma: f64, r: f64, t: f64) -> Result<f64, PricingError> {
    domain("s0 must be positive", s0 > 0.0 && s0.is_finite())?;
    domain("strike must be non-negative", strike >= 0.0 && strike.is_finite())?;
    domain("sigma must be positive", sigma > 0.0 && sigma.is_finite())?;
    domain("t must be positive", t > 0.0 && t.is_finite())?;
    domain("r must be finite", r.is_finite())?;
    if strike == 0.0 {
        return Ok(s0);
    }
    let vol = sigma * t.sqrt();
    let d1 = ((s0 / strike).ln() + (r + 0.5 * sigma * sigma) * t) / vol;
    let d2 = d1 - vol;
    Ok(s0 * normal_cdf(d1) - strike * (-r * t).exp() * normal_cdf(d2))
}

/// Discounted down-and-out call with continuously monitored barrier `barrier <= strike`:
///
/// ```text
/// C_do = C(S, K) - (H/S)^(2r/σ² - 1) C(H²/S, K)
/// ```
pub fn closed_form_dao_call(s0: f64, strike: f64, barrier: f64, sigma: f64, r: f64, t: f64) -> Result<f64, PricingError> {
    domain("barrier must be positive", barrier > 0.0 && barrier.is_finite())?;
    domain("barrier must not exceed s0", barrier <= s0)?;
    domain("barrier must not exceed the strike", barrier <= strike)?;
    let vanilla = black_scholes_call(s0, strike, sigma, r, t)?;
    if barrier == s0 {
        return Ok(0.0);
    }
    let image = black_scholes_call(barrier * barrier / s0, strike, sigma, r, t)?;
    let weight = (barrier / s0).powf(2.0 * r / (sigma * sigma) - 1.0);
    Ok((vanilla - weight * image).max(0.0))
}

/// `P(min_{s<=t} X_s > barrier)` for `X = x0 + σ W`.
pub fn survival_probability_bm(x0: f64, barrier: f64, sigma: f64, t: f64) -> Result<f64, PricingError> {
    domain("x0 must lie above the barrier", x0 > barrier && x0.is_finite())?;
    domain("sigma must be positive", sigma > 0.0 && sigma.is_finite())?;
    domain("t must be non-negative", t >= 0.0 && t.is_finite())?;
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - 2.0 * normal_cdf(-(x0 - barrier) / (sigma * t.sqrt())))
}
