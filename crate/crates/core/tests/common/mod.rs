#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smrac::engine::SimulationConfig;
use smrac::estimator::EstimatorGains;
use smrac::numerics::{pinv_left, Matrix, Vector};
use smrac::scenario::default_config;
use smrac::system::{ReferenceModel, SubsystemParams, SwitchSchedule};

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-scale..scale))
}

/// `-(S Sᵀ + 0.5 I) + (K - Kᵀ)`: its symmetric part is negative definite,
/// so it is Hurwitz.
pub fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let s = uniform(rng, n, n, 1.0);
    let k = uniform(rng, n, n, 1.0);
    -(&s * s.transpose() + Matrix::identity(n, n) * 0.5) + (&k - k.transpose())
}

fn random_full_rank(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Matrix {
    loop {
        let b = uniform(rng, n, m, 1.0);
        let g = b.transpose() * &b;
        let eig = g.clone().symmetric_eigenvalues();
        if eig.min() > 1e-2 * eig.max() && pinv_left(&b).is_ok() {
            return b;
        }
    }
}

/// A random matched scenario: `B_i = B_m M_i`, `A_i = A_m − B_i K_xiᵀ`.
pub fn random_config(seed: u64, t_end: f64) -> SimulationConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=3);
    let m = rng.gen_range(1..=2);
    let p = n * m;
    let nsub = rng.gen_range(2..=4);
    let a_m = random_hurwitz(&mut rng, n);
    let b_m = random_full_rank(&mut rng, n, m);
    let reference = ReferenceModel::new(a_m.clone(), b_m.clone()).unwrap();

    let subsystems = (0..nsub)
        .map(|_| {
            let mix = loop {
                let mm = Matrix::identity(m, m) + uniform(&mut rng, m, m, 0.3);
                if mm.determinant().abs() > 0.3 {
                    break mm;
                }
            };
            let b = &b_m * mix;
            let k_x = uniform(&mut rng, n, m, 1.0);
            let a = &a_m - &b * k_x.transpose();
            SubsystemParams::new(a, b).unwrap()
        })
        .collect();

    let interval = t_end / 4.0;
    let cycle: Vec<usize> = (0..nsub).collect();
    let mut cfg = default_config();
    cfg.subsystems = subsystems;
    cfg.reference = reference;
    cfg.schedule = SwitchSchedule::periodic(0.0, interval, &cycle, t_end).unwrap();
    cfg.gains = vec![EstimatorGains::uniform(p); nsub];
    cfg.q_m = Matrix::identity(n, n);
    cfg.x0 = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    cfg.xm0 = Vector::zeros(n);
    cfg.phi_hat0 = vec![Vector::zeros(p); nsub];
    cfg.t_end = t_end;
    cfg.signal.rbar = Vector::zeros(m);
    cfg.signal.amplitude = rng.gen_range(1.0..5.0);
    cfg.signal.frequencies = vec![1.0, 2.5, 4.0];
    cfg.decimate = 10;
    cfg.validate().unwrap();
    cfg
}
