//! Component-level timing probe; ignored by default.

use sdsm_core::{cholesky, Covariogram, Location, SymMatrix};

#[test]
#[ignore]
fn component_costs() {
    use rand::Rng;
    let n = 240usize;
    let mut rng = sdsm_core::rng::substream(1, &[2]);
    let locs: Vec<Location> = (0..n)
        .map(|_| Location::xy(rng.random(), rng.random()))
        .collect();
    let h = Covariogram::Exponential.build_corr_matrix(&locs, 3.0).unwrap();
    let f = cholesky(&h).unwrap();
    let target = Location::xy(0.5, 0.5);

    let reps = 30_000usize;

    // Distance + exp fill.
    let mut h_buf = vec![0.0; n];
    let start = std::time::Instant::now();
    let mut sink = 0.0;
    for r in 0..reps {
        let phi = 3.0 + (r % 3) as f64 * 0.001;
        for (hb, s) in h_buf.iter_mut().zip(&locs) {
            *hb = Covariogram::Exponential.corr_unchecked(target.distance(s), phi);
        }
        sink += h_buf[r % n];
    }
    let fill = start.elapsed().as_secs_f64() / reps as f64;

    // Forward solve.
    let start = std::time::Instant::now();
    for r in 0..reps {
        h_buf[r % n] = 1.0 + sink * 1e-300;
        f.solve_lower_in_place(&mut h_buf);
        sink += h_buf[r % n];
    }
    let solve = start.elapsed().as_secs_f64() / reps as f64;

    // Dots.
    let z: Vec<f64> = (0..n).map(|i| i as f64 * 1e-3).collect();
    let start = std::time::Instant::now();
    for _ in 0..reps {
        let mut mean = 0.0;
        let mut q = 0.0;
        for (&v, &zz) in h_buf.iter().zip(&z) {
            mean += v * zz;
            q += v * v;
        }
        sink += mean + q;
    }
    let dots = start.elapsed().as_secs_f64() / reps as f64;

    // Substream init + two normal draws.
    let start = std::time::Instant::now();
    for r in 0..reps {
        use rand_distr::{Distribution, StandardNormal};
        let mut lr = sdsm_core::rng::substream(7, &[3, r as u64, 9]);
        let a: f64 = StandardNormal.sample(&mut lr);
        let b: f64 = StandardNormal.sample(&mut lr);
        sink += a + b;
    }
    let stream = start.elapsed().as_secs_f64() / reps as f64;

    println!(
        "per-target costs at n={n}: fill {:.2} us, solve {:.2} us, dots {:.2} us, stream {:.2} us (sink {sink:.3e})",
        fill * 1e6,
        solve * 1e6,
        dots * 1e6,
        stream * 1e6
    );

    // Factorization cost.
    let start = std::time::Instant::now();
    for _ in 0..200 {
        let f = cholesky(&SymMatrix::new(h.as_matrix().clone()).unwrap()).unwrap();
        std::hint::black_box(&f);
    }
    println!("cholesky at n={n}: {:.1} us", start.elapsed().as_secs_f64() / 200.0 * 1e6);
}

#[test]
#[ignore]
fn interleaved_vs_scalar_solve() {
    use rand::Rng;
    let n = 240usize;
    let mut rng = sdsm_core::rng::substream(5, &[6]);
    let locs: Vec<Location> = (0..n)
        .map(|_| Location::xy(rng.random(), rng.random()))
        .collect();
    let h = Covariogram::Exponential.build_corr_matrix(&locs, 3.0).unwrap();
    let f = cholesky(&h).unwrap();

    let base: Vec<f64> = (0..n * 8).map(|_| rng.random::<f64>()).collect();
    let reps = 3000usize;

    let mut buf = vec![0.0; n * 8];
    let start = std::time::Instant::now();
    let mut sink = 0.0;
    for _ in 0..reps {
        buf.copy_from_slice(&base);
        f.solve_lower_interleaved(&mut buf, 8);
        sink += buf[0];
    }
    let inter = start.elapsed().as_secs_f64() / reps as f64;

    let mut one = vec![0.0; n];
    let start = std::time::Instant::now();
    for _ in 0..reps {
        for t in 0..8 {
            for i in 0..n {
                one[i] = base[i * 8 + t];
            }
            f.solve_lower_in_place(&mut one);
            sink += one[0];
        }
    }
    let scalar = start.elapsed().as_secs_f64() / reps as f64;

    println!(
        "8-rhs solve at n={n}: interleaved {:.2} us, scalar x8 {:.2} us (sink {sink:.3})",
        inter * 1e6,
        scalar * 1e6
    );
}
