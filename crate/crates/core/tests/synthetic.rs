use retail_forecast::features::log_transform;
use retail_forecast::seasonality::{group_mean_log_sales, GroupAssignment};
use retail_forecast::synthetic::{generate, SynthConfig};
use retail_forecast::tweedie::{self, TweedieParams};

fn z_values(cfg: &SynthConfig) -> (Vec<f64>, Vec<f64>) {
    let (panel, truth) = generate(cfg).unwrap();
    let ids: Vec<_> = truth.groups.keys().copied().collect();
    let mut z = Vec::new();
    let mut p0 = Vec::new();
    for r in &panel.records {
        z.push(log_transform(r.sales).unwrap());
        let row = ids.binary_search(&r.retailer).unwrap();
        let mu = truth.mu[row][(r.month - truth.first_month) as usize];
        p0.push(tweedie::prob_zero(TweedieParams::new(mu, cfg.phi_true, cfg.rho_true).unwrap()));
    }
    (z, p0)
}

#[test]
fn zero_fraction_matches_point_mass() {
    let cfg = SynthConfig { n_retailers: 2000, seed: 11, ..Default::default() };
    let (z, p0) = z_values(&cfg);
    let zeros = z.iter().filter(|&&v| v == 0.0).count() as f64 / z.len() as f64;
    let expected = p0.iter().sum::<f64>() / p0.len() as f64;
    assert!((zeros - expected).abs() < 0.01, "{zeros} vs {expected}");
}

#[test]
fn transformed_sales_zero_inflated_and_right_skewed() {
    let (z, _) = z_values(&SynthConfig { n_retailers: 2000, seed: 12, ..Default::default() });
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let m2 = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = z.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let zero_mass = z.iter().filter(|&&v| v == 0.0).count() as f64 / n;
    assert!(skew > 0.0, "skewness {skew}");
    assert!(zero_mass > 0.01, "zero mass {zero_mass}");
}

fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum();
    cov / var
}

#[test]
fn group_series_shows_annual_cycle() {
    let cfg = SynthConfig { n_retailers: 1000, n_months: 48, seed: 13, ..Default::default() };
    let (panel, truth) = generate(&cfg).unwrap();
    let mut assignment = GroupAssignment::single(panel.retailers());
    assignment.k = cfg.n_groups;
    assignment.assignment = truth.groups.clone();
    // Summed raw sales are dominated by a handful of exp(z) outliers; the
    // mean of log1p sales is the series profiles are fitted to.
    let series = group_mean_log_sales(&panel, &assignment);
    assert_eq!(series.series.len(), cfg.n_groups);
    for (g, s) in &series.series {
        let (a12, a7) = (autocorrelation(s, 12), autocorrelation(s, 7));
        assert!(a12 > a7 + 0.3, "group {g}: lag 12 {a12} vs lag 7 {a7}");
    }
}

#[test]
fn same_seed_same_panel() {
    let cfg = SynthConfig { n_retailers: 200, seed: 14, ..Default::default() };
    let (a, ta) = generate(&cfg).unwrap();
    let (b, tb) = generate(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    // Retailer streams are independent of panel size.
    let (c, _) = generate(&SynthConfig { n_retailers: 100, ..cfg }).unwrap();
    assert_eq!(c.records[..], a.records[..c.records.len()]);
}

#[test]
fn planted_mu_is_positive_and_consistent() {
    let (panel, truth) = generate(&SynthConfig { n_retailers: 100, seed: 15, ..Default::default() }).unwrap();
    assert!(truth.mu.iter().flatten().all(|&m| m > 0.0 && m.is_finite()));
    let r = &panel.records[30];
    assert_eq!(truth.mu_at(r.retailer, r.month), Some(truth.mu[1][r.month as usize - 1]));
    assert!(generate(&SynthConfig { rho_true: 2.0, ..Default::default() }).is_err());
}
