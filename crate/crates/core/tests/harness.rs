use scanstat::field::white_noise;
use scanstat::harness::{
    calibrate_mc, permutation_pvalue, run_null, run_power, ExperimentConfig, ScannerSpec,
};
use scanstat::prefix::PrefixSumTable;

fn cfg(n: usize, h_lo: usize, h_hi: usize, reps: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n,
        d: 2,
        h_lo,
        h_hi,
        mu: 0.0,
        signal_shape: Some(vec![8, 6]),
        reps,
        seed,
        scanners: vec![ScannerSpec::Adaptive],
        alpha_grid: vec![0.5],
    }
}

#[test]
fn zero_signal_power_matches_size() {
    let c = cfg(64, 4, 23, 400, 11);
    let size = run_null(&c).unwrap().scanners[0].size[0].rate;
    let power = run_power(&c).unwrap().scanners[0].power[0].rate;
    let pooled = (size + power) / 2.0;
    let se = (2.0 * pooled * (1.0 - pooled) / 400.0).sqrt();
    assert!(se > 0.0, "degenerate rates {size} {power}");
    assert!(((size - power) / se).abs() <= 3.0, "size {size} power {power}");
}

#[test]
fn power_nondecreasing_in_signal() {
    let reps = 200;
    let mut c = cfg(64, 4, 23, reps, 12);
    c.alpha_grid = vec![0.05];
    let mut last = 0.0;
    for mu in [2.0, 4.0, 6.0] {
        c.mu = mu;
        let p = run_power(&c).unwrap().scanners[0].power[0].rate;
        let slack = 2.0 * (p * (1.0 - p) / reps as f64).sqrt();
        assert!(p + slack >= last, "mu {mu}: {p} < {last}");
        last = p;
    }
    assert!(last > 0.5);
}

#[test]
fn recalibrated_adaptive_size_is_nominal() {
    let mut c = cfg(128, 4, 47, 400, 13);
    c.signal_shape = None;
    let cal = calibrate_mc(ScannerSpec::Adaptive, &c, 0.05).unwrap();
    c.seed = 14;
    let fresh = run_null(&c).unwrap();
    let size = cal.rejection_rate(&fresh.scanners[0].null.as_ref().unwrap().stats);
    assert!((size - 0.05).abs() <= 0.033, "size {size}");
}

#[test]
fn permutation_pvalues_are_super_uniform_under_null() {
    let fields = 100;
    let n_perm = 19;
    let ps: Vec<f64> = (0..fields)
        .map(|i| {
            let f = white_noise(&[16, 16], 5000 + i).unwrap();
            permutation_pvalue(&f, n_perm, 77 + i, |g| {
                Ok(PrefixSumTable::new(g).shape_max(&[3, 4])?.max_zscore())
            })
            .unwrap()
        })
        .collect();
    // DKW band at confidence 0.999
    let band = ((2.0f64 / 0.001).ln() / (2.0 * fields as f64)).sqrt();
    for k in 1..=10 {
        let u = k as f64 / 20.0;
        let frac = ps.iter().filter(|&&p| p <= u + 1e-12).count() as f64 / fields as f64;
        assert!(frac <= u + band, "P(p <= {u}) = {frac}");
    }
}
