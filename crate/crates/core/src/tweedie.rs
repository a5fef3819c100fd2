//! The Tweedie distribution with power index `1 < rho < 2`.
//!
//! Two parameterisations are kept side by side: the exponential-dispersion
//! form `Tw(mu, phi, rho)` used for likelihoods and training losses, and the
//! compound Poisson-Gamma form `(lambda, alpha, gamma)` used for sampling and
//! for the series normaliser. A draw is the sum of `N ~ Poisson(lambda)`
//! independent `Gamma(alpha, gamma)` variables, zero when `N = 0`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power indices accepted by fitting routines (dispersion search, training
/// losses). The open interval `(1, 2)` is valid for density evaluation, but
/// the endpoints degenerate into Poisson and Gamma behaviour.
pub const FIT_RHO_MIN: f64 = 1.05;
pub const FIT_RHO_MAX: f64 = 1.95;

/// Relative cutoff below the largest term at which the series is truncated.
const SERIES_REL_CUTOFF: f64 = 1e-17;
const SERIES_MAX_TERMS: usize = 1_000_000;

const PHI_SEARCH_MIN: f64 = 1e-4;
const PHI_SEARCH_MAX: f64 = 1e4;

/// Mean/dispersion/power parameterisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweedieParams {
    mu: f64,
    phi: f64,
    rho: f64,
}

impl TweedieParams {
    pub fn new(mu: f64, phi: f64, rho: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be > 0, got {mu}")));
        }
        if !(phi.is_finite() && phi > 0.0) {
            return Err(Error::InvalidParameter(format!("phi must be > 0, got {phi}")));
        }
        check_rho(rho)?;
        Ok(Self { mu, phi, rho })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    /// `phi * mu^rho`.
    pub fn variance(&self) -> f64 {
        self.phi * self.mu.powf(self.rho)
    }
}

/// Poisson rate / Gamma shape / Gamma scale parameterisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundParams {
    lambda: f64,
    alpha: f64,
    gamma: f64,
}

impl CompoundParams {
    pub fn new(lambda: f64, alpha: f64, gamma: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(Self { lambda, alpha, gamma })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mean(&self) -> f64 {
        self.lambda * self.alpha * self.gamma
    }

    pub fn variance(&self) -> f64 {
        self.lambda * self.alpha * self.gamma * self.gamma * (1.0 + self.alpha)
    }

    /// Inverse of [`reparameterize`]. Fails when `lambda = 0`, where the
    /// mean is zero and no Tweedie parameters exist.
    pub fn to_tweedie(&self) -> Result<TweedieParams> {
        let rho = (self.alpha + 2.0) / (self.alpha + 1.0);
        let mu = self.mean();
        let phi = self.variance() / mu.powf(rho);
        TweedieParams::new(mu, phi, rho)
    }
}

impl From<TweedieParams> for CompoundParams {
    fn from(p: TweedieParams) -> Self {
        reparameterize(&p)
    }
}

impl From<&TweedieParams> for CompoundParams {
    fn from(p: &TweedieParams) -> Self {
        reparameterize(p)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho > 1.0 && rho < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("rho must lie in (1, 2), got {rho}")))
    }
}

/// Checks `rho` against the closed fitting range `[1.05, 1.95]`.
pub fn check_fit_rho(rho: f64) -> Result<()> {
    if (FIT_RHO_MIN..=FIT_RHO_MAX).contains(&rho) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "rho must lie in [{FIT_RHO_MIN}, {FIT_RHO_MAX}] for fitting, got {rho}"
        )))
    }
}

/// Maps `Tw(mu, phi, rho)` to the compound Poisson-Gamma parameters.
///
/// ```text
/// lambda = mu^(2-rho) / (phi (2-rho))
/// alpha  = (2-rho) / (rho-1)
/// gamma  = phi (rho-1) mu^(rho-1)
/// ```
pub fn reparameterize(p: &TweedieParams) -> CompoundParams {
    let TweedieParams { mu, phi, rho } = *p;
    CompoundParams {
        lambda: mu.powf(2.0 - rho) / (phi * (2.0 - rho)),
        alpha: (2.0 - rho) / (rho - 1.0),
        gamma: phi * (rho - 1.0) * mu.powf(rho - 1.0),
    }
}

/// `Pr(Z = 0) = exp(-lambda)`.
pub fn prob_zero(p: impl Into<CompoundParams>) -> f64 {
    (-p.into().lambda).exp()
}

/// Log of the density (for `y > 0`) or of the point mass (for `y = 0`).
pub fn log_density(y: f64, p: &TweedieParams) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("Tweedie support is y >= 0, got {y}")));
    }
    let TweedieParams { mu, phi, rho } = *p;
    if y == 0.0 {
        return Ok(-reparameterize(p).lambda);
    }
    let theta_term = y * mu.powf(1.0 - rho) / (1.0 - rho);
    let kappa_term = mu.powf(2.0 - rho) / (2.0 - rho);
    Ok((theta_term - kappa_term) / phi + log_a(y, phi, rho)?)
}

/// Log of the normalising function `a(y, phi, rho) = (1/y) sum_j W_j`.
///
/// The terms are log-concave in `j`, so the sum is evaluated by locating the
/// largest term and walking outward in both directions until terms drop
/// below `1e-17` of the maximum.
pub fn log_a(y: f64, phi: f64, rho: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("series normaliser needs y > 0, got {y}")));
    }
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::InvalidParameter(format!("phi must be > 0, got {phi}")));
    }
    check_rho(rho)?;

    let alpha = (2.0 - rho) / (rho - 1.0);
    let log_z =
        alpha * y.ln() - alpha * (rho - 1.0).ln() - (1.0 + alpha) * phi.ln() - (2.0 - rho).ln();
    let log_w = |j: f64| j * log_z - libm::lgamma(j + 1.0) - libm::lgamma(j * alpha);

    // Stationary point of the Stirling approximation to log W_j.
    let estimate = ((log_z - alpha * alpha.ln()) / (1.0 + alpha)).exp();
    let mut j_max = if estimate.is_finite() {
        estimate.round().clamp(1.0, 1e15)
    } else {
        1.0
    };
    let mut w_max = log_w(j_max);
    loop {
        let up = log_w(j_max + 1.0);
        if up > w_max {
            j_max += 1.0;
            w_max = up;
            continue;
        }
        if j_max > 1.0 {
            let down = log_w(j_max - 1.0);
            if down > w_max {
                j_max -= 1.0;
                w_max = down;
                continue;
            }
        }
        break;
    }
    if !w_max.is_finite() {
        return Err(Error::Numeric(format!(
            "series maximum is not finite (y={y}, phi={phi}, rho={rho}, j={j_max})"
        )));
    }

    let floor = w_max + SERIES_REL_CUTOFF.ln();
    let mut sum = 1.0;
    let mut terms = 1usize;

    let mut j = j_max + 1.0;
    loop {
        let w = log_w(j);
        if w < floor {
            break;
        }
        sum += (w - w_max).exp();
        terms += 1;
        if terms > SERIES_MAX_TERMS {
            return Err(series_diverged(y, phi, rho, j_max));
        }
        j += 1.0;
    }
    let mut j = j_max - 1.0;
    while j >= 1.0 {
        let w = log_w(j);
        if w < floor {
            break;
        }
        sum += (w - w_max).exp();
        terms += 1;
        if terms > SERIES_MAX_TERMS {
            return Err(series_diverged(y, phi, rho, j_max));
        }
        j -= 1.0;
    }

    Ok(w_max + sum.ln() - y.ln())
}

fn series_diverged(y: f64, phi: f64, rho: f64, j_max: f64) -> Error {
    Error::Numeric(format!(
        "series did not converge within {SERIES_MAX_TERMS} terms \
         (y={y}, phi={phi}, rho={rho}, peak term j={j_max})"
    ))
}

/// Negative log-likelihood in the linear predictor `eta = log(mu)`, with the
/// `mu`-independent normaliser dropped and `phi = 1`.
pub fn loss(y: f64, eta: f64, rho: f64) -> f64 {
    (eta * (2.0 - rho)).exp() / (2.0 - rho) - y * (eta * (1.0 - rho)).exp() / (1.0 - rho)
}

/// First and second derivatives of [`loss`] with respect to `eta`.
///
/// The Hessian is strictly positive for `y >= 0` and `1 < rho < 2`.
pub fn loss_grad_hess(y: f64, eta: f64, rho: f64) -> (f64, f64) {
    let a = (eta * (2.0 - rho)).exp();
    let b = y * (eta * (1.0 - rho)).exp();
    (a - b, (2.0 - rho) * a - (1.0 - rho) * b)
}

/// Draws one value from the compound Poisson-Gamma construction.
pub fn sample<R: Rng + ?Sized>(p: impl Into<CompoundParams>, rng: &mut R) -> f64 {
    let p = p.into();
    if p.lambda == 0.0 {
        return 0.0;
    }
    let n = Poisson::new(p.lambda)
        .expect("lambda validated positive and finite")
        .sample(rng) as u64;
    if n == 0 {
        return 0.0;
    }
    let gamma = Gamma::new(p.alpha, p.gamma).expect("alpha and gamma validated positive");
    (0..n).map(|_| gamma.sample(rng)).sum()
}

/// Result of the maximum-likelihood dispersion search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionFit {
    pub phi: f64,
    pub log_likelihood: f64,
    /// The optimum sits on the edge of `[1e-4, 1e4]`; the likelihood is
    /// unbounded or flat in that direction.
    pub at_boundary: bool,
}

/// `sum_i log_density(ys[i]; mus[i], phi, rho)`.
pub fn log_likelihood(ys: &[f64], mus: &[f64], phi: f64, rho: f64) -> Result<f64> {
    if ys.len() != mus.len() {
        return Err(Error::Argument(format!(
            "ys and mus differ in length ({} vs {})",
            ys.len(),
            mus.len()
        )));
    }
    ys.iter()
        .zip(mus)
        .map(|(&y, &mu)| log_density(y, &TweedieParams::new(mu, phi, rho)?))
        .sum()
}

/// Maximum-likelihood dispersion for known means, by golden-section search
/// on `log(phi)` over `[1e-4, 1e4]`.
pub fn fit_dispersion(ys: &[f64], mus: &[f64], rho: f64) -> Result<DispersionFit> {
    check_fit_rho(rho)?;
    if ys.is_empty() {
        return Err(Error::Estimation("no observations".into()));
    }
    if ys.len() != mus.len() {
        return Err(Error::Argument(format!(
            "ys and mus differ in length ({} vs {})",
            ys.len(),
            mus.len()
        )));
    }
    if ys.iter().all(|&y| y == 0.0) {
        return Err(Error::Estimation(
            "all observations are zero; dispersion is not identifiable".into(),
        ));
    }

    let objective = |log_phi: f64| log_likelihood(ys, mus, log_phi.exp(), rho);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (PHI_SEARCH_MIN.ln(), PHI_SEARCH_MAX.ln());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while hi - lo > 1e-9 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    let mut log_phi = 0.5 * (lo + hi);
    let mut best = objective(log_phi)?;
    // Golden-section only brackets interior optima; compare against the edges.
    for edge in [PHI_SEARCH_MIN.ln(), PHI_SEARCH_MAX.ln()] {
        let f = objective(edge)?;
        if f > best {
            best = f;
            log_phi = edge;
        }
    }
    let at_boundary = (log_phi - PHI_SEARCH_MIN.ln()).abs() < 1e-6
        || (log_phi - PHI_SEARCH_MAX.ln()).abs() < 1e-6;
    if at_boundary {
        log::warn!("dispersion estimate hit the search boundary (phi = {})", log_phi.exp());
    }
    Ok(DispersionFit {
        phi: log_phi.exp(),
        log_likelihood: best,
        at_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn construction_rejects_invalid() {
        assert!(TweedieParams::new(0.0, 1.0, 1.5).is_err());
        assert!(TweedieParams::new(1.0, -1.0, 1.5).is_err());
        assert!(TweedieParams::new(1.0, 1.0, 1.0).is_err());
        assert!(TweedieParams::new(1.0, 1.0, 2.0).is_err());
        assert!(TweedieParams::new(f64::NAN, 1.0, 1.5).is_err());
        assert!(CompoundParams::new(-0.1, 1.0, 1.0).is_err());
        assert!(CompoundParams::new(0.0, 0.0, 1.0).is_err());
        assert!(CompoundParams::new(0.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn reparameterize_unit_case() {
        let c = reparameterize(&TweedieParams::new(1.0, 1.0, 1.5).unwrap());
        assert_relative_eq!(c.lambda(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(c.alpha(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(c.gamma(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(c.mean(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(c.variance(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn reparameterize_poisson_limit() {
        let mut last_alpha = 0.0;
        for rho in [1.1, 1.01, 1.001] {
            let c = reparameterize(&TweedieParams::new(1.0, 1.0, rho).unwrap());
            assert!(c.alpha() > last_alpha);
            last_alpha = c.alpha();
            assert_relative_eq!(c.lambda(), 1.0 / (2.0 - rho), max_relative = 1e-12);
        }
        assert!(last_alpha > 900.0);
    }

    #[test]
    fn compound_round_trip() {
        let p = TweedieParams::new(3.7, 0.4, 1.27).unwrap();
        let back = CompoundParams::from(p).to_tweedie().unwrap();
        assert_relative_eq!(back.mu(), p.mu(), max_relative = 1e-12);
        assert_relative_eq!(back.phi(), p.phi(), max_relative = 1e-12);
        assert_relative_eq!(back.rho(), p.rho(), max_relative = 1e-12);
        assert!(CompoundParams::new(0.0, 1.0, 1.0).unwrap().to_tweedie().is_err());
    }

    #[test]
    fn prob_zero_values() {
        assert_eq!(prob_zero(CompoundParams::new(0.0, 1.0, 1.0).unwrap()), 1.0);
        let half = prob_zero(CompoundParams::new(2f64.ln(), 1.0, 1.0).unwrap());
        assert_relative_eq!(half, 0.5, max_relative = 1e-15);
        let p = TweedieParams::new(1.0, 1.0, 1.5).unwrap();
        assert_relative_eq!(prob_zero(p), (-2.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn log_density_at_zero_is_minus_lambda() {
        let p = TweedieParams::new(1.0, 1.0, 1.5).unwrap();
        assert_relative_eq!(log_density(0.0, &p).unwrap(), -2.0, max_relative = 1e-15);
        assert!(matches!(log_density(-1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn log_a_rejects_nonpositive_y() {
        assert!(log_a(0.0, 1.0, 1.5).is_err());
        assert!(log_a(1.0, 1.0, 2.5).is_err());
    }

    #[test]
    fn loss_closed_form() {
        let expected = 1.0 / 0.7 + 2.0 / 0.3;
        assert_relative_eq!(loss(2.0, 0.0, 1.3), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 8.095238095238095, max_relative = 1e-14);
        let (g, h) = loss_grad_hess(0.0, 0.0, 1.3);
        assert_relative_eq!(g, 1.0);
        assert_relative_eq!(h, 0.7, max_relative = 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_log_y() {
        for &y in &[0.3, 1.0, 7.5, 120.0] {
            for &rho in &[1.1, 1.3, 1.8] {
                let (g, h) = loss_grad_hess(y, f64::ln(y), rho);
                assert!(g.abs() < 1e-12 * y.powf(2.0 - rho).max(1.0), "g = {g}");
                assert!(h > 0.0);
                let at_min = loss(y, y.ln(), rho);
                assert!(loss(y, y.ln() + 0.01, rho) > at_min);
                assert!(loss(y, y.ln() - 0.01, rho) > at_min);
            }
        }
    }

    #[test]
    fn zero_target_loss_increasing() {
        let mut prev = f64::NEG_INFINITY;
        for i in -20..20 {
            let eta = i as f64 * 0.25;
            let l = loss(0.0, eta, 1.4);
            assert_relative_eq!(l, (eta * 0.6).exp() / 0.6, max_relative = 1e-14);
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn sampler_zero_rate_is_zero() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = CompoundParams::new(0.0, 2.0, 1.0).unwrap();
        assert!((0..1000).all(|_| sample(p, &mut rng) == 0.0));
    }

    #[test]
    fn dispersion_requires_positive_observation() {
        let err = fit_dispersion(&[0.0, 0.0], &[1.0, 1.0], 1.3).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
        assert!(fit_dispersion(&[1.0], &[1.0], 1.0).is_err());
        assert!(fit_dispersion(&[1.0], &[1.0, 2.0], 1.3).is_err());
    }

    #[test]
    fn dispersion_single_exact_observation_hits_boundary() {
        let fit = fit_dispersion(&[1.0], &[1.0], 1.3).unwrap();
        assert!(fit.at_boundary);
        assert_relative_eq!(fit.phi, PHI_SEARCH_MIN, max_relative = 1e-6);
    }
}
