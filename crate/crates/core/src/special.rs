//! Special functions used by the analytic models.
//!
//! The Poisson CDF is a log-space summation of Poisson terms, walking away
//! from the term nearest the mode so every step shrinks the summand; the walk
//! stops once a term drops below 1e-18 of the running sum. `ln k!` and `erf`
//! come from `libm` (fdlibm ports, full double precision).

const TERM_CUTOFF: f64 = 1e-18;
// exp() of anything below this is zero in f64, even after multiplying by a
// partial sum with up to ~1e6 terms.
const LOG_UNDERFLOW: f64 = -760.0;

pub fn ln_factorial(k: u64) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

/// Natural log of the Poisson probability `P(X = k)` for mean `mu > 0`.
pub fn poisson_ln_pmf(k: u64, mu: f64) -> f64 {
    -mu + k as f64 * mu.ln() - ln_factorial(k)
}

/// Poisson CDF `P(X <= k)` for mean `mu`, i.e. the regularized upper
/// incomplete gamma function `Q(k + 1, mu)`. Non-positive means put all mass
/// at zero and return 1.
pub fn poisson_cdf(k: u64, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 1.0;
    }
    if (k as f64) < mu {
        // Terms below k shrink by j/mu per step.
        let ln_top = poisson_ln_pmf(k, mu);
        if ln_top < LOG_UNDERFLOW {
            return 0.0;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = k;
        while j > 0 {
            term *= j as f64 / mu;
            sum += term;
            if term < TERM_CUTOFF * sum {
                break;
            }
            j -= 1;
        }
        (ln_top + sum.ln()).exp().min(1.0)
    } else {
        // Upper tail above k shrinks by mu/(j+1) per step.
        let ln_first = poisson_ln_pmf(k + 1, mu);
        if ln_first < LOG_UNDERFLOW {
            return 1.0;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = k + 1;
        loop {
            j += 1;
            term *= mu / j as f64;
            sum += term;
            if term < TERM_CUTOFF * sum {
                break;
            }
        }
        (1.0 - (ln_first + sum.ln()).exp()).max(0.0)
    }
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}
