use homprobe::analytic::SetupParams;
use homprobe::design::optimal_intensity;
use homprobe::montecarlo::{mean_and_sd, run_replicas, uncertainty_scan, TrialPlan};

fn setup(p: f64, eta: f64, xi: f64, beta_sq: f64) -> SetupParams {
    SetupParams::new(p, eta, xi, beta_sq).unwrap()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn equal_effective_parameters_give_equal_spread() {
    // ηp = 0.5, η|β|² = 1 both ways
    let family = [setup(1.0, 0.5, 0.99, 2.0), setup(0.5, 1.0, 0.99, 1.0)];
    let replicas = 300;
    let rows = uncertainty_scan(&family, 0.5, &TrialPlan::new(100_000, 77).unwrap(), replicas).unwrap();
    // log variance ratio is ~normal with variance 2/(n1-1) + 2/(n2-1)
    let z = 2.0 * (rows[0].empirical_dt / rows[1].empirical_dt).ln()
        / (4.0 / (replicas as f64 - 1.0)).sqrt();
    assert!(z.abs() < 2.576, "variance ratio z = {z}");
    let se = (rows[0].empirical_dt.powi(2) + rows[1].empirical_dt.powi(2)) / replicas as f64;
    let zm = (rows[0].mean_t_hat - rows[1].mean_t_hat) / se.sqrt();
    assert!(zm.abs() < 2.576, "mean z = {zm}");
    assert!((rows[0].scaling_dt - rows[1].scaling_dt).abs() < 1e-12 * rows[0].scaling_dt);
}

#[test]
fn doubling_pulses_shrinks_spread_by_root_two() {
    let s = [setup(1.0, 1.0, 1.0, 1.0)];
    let small = uncertainty_scan(&s, 0.5, &TrialPlan::new(50_000, 9).unwrap(), 1000).unwrap();
    let large = uncertainty_scan(&s, 0.5, &TrialPlan::new(100_000, 10).unwrap(), 1000).unwrap();
    let ratio = small[0].empirical_dt / large[0].empirical_dt;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn intensity_sweep_minimum_near_optimizer() {
    let xs = [0.05, 0.3, 1.0, 3.0];
    let family: Vec<_> = xs.iter().map(|&x| setup(0.3, 1.0, 0.99, x)).collect();
    let rows = uncertainty_scan(&family, 0.5, &TrialPlan::new(100_000, 4242).unwrap(), 400).unwrap();
    let argmin = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.empirical_dt.total_cmp(&b.1.empirical_dt))
        .unwrap()
        .0;
    let x_star = optimal_intensity(0.3, 0.99).unwrap().x_star;
    let nearest = xs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.ln() - x_star.ln()).abs().total_cmp(&(b.1.ln() - x_star.ln()).abs()))
        .unwrap()
        .0;
    assert!(argmin.abs_diff(nearest) <= 1, "argmin x = {}, x* = {x_star}", xs[argmin]);
}

#[test]
fn spread_follows_scaling_law_up_to_one_constant() {
    // At T = 0 and weak probes the first-order spread is √(2(1−R0)) times the
    // scaling law, so one fitted constant must fit every cell.
    let family = [
        setup(1.0, 1.0, 1.0, 0.05),
        setup(1.0, 0.5, 1.0, 0.2),
        setup(0.6, 0.8, 1.0, 0.1),
        setup(1.0, 1.0, 0.99, 0.3),
        setup(0.4, 1.0, 0.99, 0.15),
        setup(0.9, 0.3, 0.995, 0.5),
    ];
    let rows = uncertainty_scan(&family, 0.0, &TrialPlan::new(200_000, 1).unwrap(), 400).unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.empirical_dt / r.scaling_dt).collect();
    let c = ratios.iter().sum::<f64>() / ratios.len() as f64;
    for (r, row) in ratios.iter().zip(&rows) {
        assert!((r / c - 1.0).abs() < 0.15, "ratio {r} vs fitted {c} at {row:?}");
    }
    assert!((c - 2f64.sqrt()).abs() < 0.1, "fitted constant {c}");
}

#[test]
fn estimator_is_consistent() {
    let s = setup(1.0, 1.0, 1.0, 1.0);
    let medians: Vec<f64> = [10_000u64, 100_000, 1_000_000]
        .iter()
        .map(|&n| {
            let rows = run_replicas(&s, 0.5, &TrialPlan::new(n, n).unwrap(), 50).unwrap();
            median(rows.iter().map(|r| (r.t_hat - 0.5).abs()).collect())
        })
        .collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
}

#[test]
fn two_sigma_coverage() {
    let s = setup(1.0, 1.0, 1.0, 1.0);
    let rows = run_replicas(&s, 0.5, &TrialPlan::new(100_000, 31337).unwrap(), 200).unwrap();
    let covered = rows.iter().filter(|r| (r.t_hat - 0.5).abs() <= 2.0 * r.t_stderr).count();
    assert!(covered >= 180, "{covered}/200");
    let (mean, _) = mean_and_sd(&rows.iter().map(|r| r.t_hat).collect::<Vec<_>>());
    assert!((mean - 0.5).abs() < 0.005);
}
