use piaid::harness::*;
use piaid::netgen::SystemConfig;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let grid: Vec<f64> = (-4..=4).map(|i| 5.0 * i as f64).collect();
    let pts = interference_window_curve(&grid, 100_000, 40.0, 17);
    for p in &pts { println!("window p2={:>5} ser={:.4e}", p.p2_db, p.ser); }
    let max_idx = pts.iter().enumerate().max_by(|a, b| a.1.ser.total_cmp(&b.1.ser)).unwrap().0;
    println!("interior max at idx {max_idx} ({} dB); ratios {:.1} / {:.1}",
        pts[max_idx].p2_db,
        pts.iter().find(|p| p.p2_db == 0.0).unwrap().ser / pts[0].ser,
        pts.iter().find(|p| p.p2_db == 0.0).unwrap().ser / pts[8].ser);
    println!("window elapsed {:.1?}", t0.elapsed());

    let t1 = Instant::now();
    let s = single_interferer_scaling(&[-30.0, -25.0, -20.0, -15.0], 100_000, 60.0, 5);
    println!("weak slope {:.3}, strong slope {:.3} (elapsed {:.1?})", s.weak_slope, s.strong_slope, t1.elapsed());
    for p in &s.weak { println!("  weak rho={:>5} ser={:.3e}", p.ratio_db, p.ser); }
    for p in &s.strong { println!("  strong 1/rho={:>5} ser={:.3e}", p.ratio_db, p.ser); }

    let t2 = Instant::now();
    let spec = ExperimentSpec::new(
        SystemConfig { seed: 8, ..SystemConfig::default_profile() },
        vec![25.0],
        vec![Scheme::PiaidExhaustive, Scheme::RandomizedPia],
        1, 8,
    );
    let cdf = ser_cdf(&spec, 25.0, 300, 1000).unwrap();
    let pi = &cdf.samples[0].1;
    let ra = &cdf.samples[1].1;
    println!("cdf elapsed {:.1?}: piaid p50={:.3e} p90={:.3e} | rand p50={:.3e} p90={:.3e}",
        t2.elapsed(), percentile(pi, 0.5), percentile(pi, 0.9), percentile(ra, 0.5), percentile(ra, 0.9));
}
