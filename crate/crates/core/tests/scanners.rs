use scanstat::eps::epsilon_adaptive_scan;
use scanstat::field::{inject_signal, white_noise, GridField, Rect, SignalSpec};
use scanstat::scan::{adaptive_scan, modified_adaptive_stat, multiscale_scan, oracle_scan};
use scanstat::threshold::{adaptive_centering, log_ratio_centering, ScanFamily, ShapeRange};

fn naive_sum(f: &GridField, anchor: &[usize], shape: &[usize]) -> f64 {
    let cols = f.dims()[1];
    let mut s = 0.0;
    for r in anchor[0]..anchor[0] + shape[0] {
        for c in anchor[1]..anchor[1] + shape[1] {
            s += f.data()[r * cols + c];
        }
    }
    s
}

/// Every rectangle with sides in `range` on a 2-d grid: (max z per shape).
fn brute_shape_maxima(f: &GridField, range: ShapeRange) -> Vec<(Vec<usize>, f64, Rect)> {
    let n = f.dims()[0];
    let mut out = Vec::new();
    for h0 in range.h_lo..=range.h_hi {
        for h1 in range.h_lo..=range.h_hi {
            let mut best = (f64::NEG_INFINITY, None);
            for a0 in 0..=n - h0 {
                for a1 in 0..=n - h1 {
                    let z = naive_sum(f, &[a0, a1], &[h0, h1]) / ((h0 * h1) as f64).sqrt();
                    if z > best.0 {
                        best = (z, Some(Rect::new(vec![a0, a1], vec![h0, h1]).unwrap()));
                    }
                }
            }
            out.push((vec![h0, h1], best.0, best.1.unwrap()));
        }
    }
    out
}

#[test]
fn ranged_scans_match_brute_force() {
    let n = 16;
    let range = ShapeRange::new(2, 5).unwrap();
    let multi = ScanFamily::multiscale(n, 2, range).unwrap();
    let adapt = ScanFamily::adaptive(n, 2, range).unwrap();
    for seed in 0..10 {
        let f = white_noise(&[n, n], seed).unwrap();
        let brute = brute_shape_maxima(&f, range);

        let zmax = brute.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
        let m = multiscale_scan(&f, range).unwrap();
        assert!((m.stat - zmax).abs() < 1e-12);
        let mp = multi.centering(&[2, 2]).unwrap();
        assert!((m.pvalue - mp.pvalue(zmax)).abs() < 1e-12);

        let tau_max = brute
            .iter()
            .map(|(h, z, _)| adapt.centering(h).unwrap().tau_hat(*z))
            .fold(f64::NEG_INFINITY, f64::max);
        let a = adaptive_scan(&f, range).unwrap();
        assert!((a.tau_hat - tau_max).abs() < 1e-10);

        let modified = brute
            .iter()
            .map(|(h, z, _)| {
                let v = log_ratio_centering(n, h);
                (z - v) * v
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((modified_adaptive_stat(&f, range).unwrap().stat - modified).abs() < 1e-10);

        let (h, z, rect) = &brute[7];
        let o = oracle_scan(&f, h).unwrap();
        assert!((o.stat - z).abs() < 1e-12);
        assert_eq!(&o.best_rect, rect);
    }
}

#[test]
fn adaptive_centering_dominates_log_ratio_centering() {
    let n = 256;
    for h_lo in [4, 6, 16] {
        for h in h_lo..=94 {
            assert!(adaptive_centering(n, h_lo, &[h, h_lo]) >= log_ratio_centering(n, &[h, h_lo]) - 1e-15);
        }
    }
}

#[test]
fn stronger_signal_lowers_pvalue() {
    let n = 64;
    let range = ShapeRange::new(4, 23).unwrap();
    let noise = white_noise(&[n, n], 77).unwrap();
    let rect = Rect::new(vec![10, 20], vec![12, 9]).unwrap();
    let mut last = 1.0;
    for mu in [0.0, 3.0, 6.0, 9.0, 12.0] {
        let f = inject_signal(&noise, &SignalSpec::new(rect.clone(), mu).unwrap()).unwrap();
        let p = adaptive_scan(&f, range).unwrap().pvalue;
        assert!(p <= last + 1e-15, "mu = {mu}: {p} > {last}");
        last = p;
    }
    assert!(last < 1e-6);
}

#[test]
fn scans_invariant_under_axis_reversal_of_both_field_and_shape() {
    let f = white_noise(&[32, 32], 5).unwrap();
    let o1 = oracle_scan(&f, &[5, 7]).unwrap();
    let o2 = oracle_scan(&f.reversed_axes(), &[7, 5]).unwrap();
    assert!((o1.stat - o2.stat).abs() < 1e-12);
    assert_eq!(o1.best_rect.reversed_axes(), o2.best_rect);
}

#[test]
fn eps_scan_is_bounded_by_full_adaptive_scan_in_range() {
    let n = 64;
    let range = ShapeRange::new(16, 23).unwrap();
    for seed in 0..5 {
        let f = white_noise(&[n, n], 900 + seed).unwrap();
        let full = adaptive_scan(&f, range).unwrap();
        let e = epsilon_adaptive_scan(&f, range, 1.0).unwrap();
        let det = e.epsilon.unwrap();
        assert!(det.pvalue_in_range >= full.pvalue - 1e-12);
    }
}
