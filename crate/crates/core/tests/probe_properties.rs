use proptest::prelude::*;

use crowlattice::lattice::{
    apply_disorder, build_h0, sample_magnetic_disorder, sample_onsite_disorder, DisorderSpec,
    LatticeSpec,
};
use crowlattice::linalg::hermitian_eigenvalues;
use crowlattice::probe::{transport, ProbeSpec, TransportSolver};

fn site(n: usize) -> impl Strategy<Value = (usize, usize)> {
    (0..n, 0..n)
}

fn setup() -> impl Strategy<Value = (usize, f64, (usize, usize), (usize, usize), f64, u64)> {
    (2usize..6)
        .prop_flat_map(|n| (Just(n), -0.5f64..0.5, site(n), site(n), 0.2f64..4.0, any::<u64>()))
        .prop_filter("distinct probe sites", |(_, _, a, b, _, _)| a != b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lossless_scattering_is_unitary((n, alpha, a, b, nu, seed) in setup(), omega in -5.0f64..5.0) {
        let spec = LatticeSpec::open(n, n, alpha);
        let dis = sample_onsite_disorder(&spec, 0.5, seed)
            .unwrap()
            .merged(sample_magnetic_disorder(&spec, 0.3, seed ^ 7).unwrap());
        let h = apply_disorder(&build_h0(&spec).unwrap(), &spec, &dis).unwrap();
        let c = transport(&h, &ProbeSpec::new(a, b, nu), omega).unwrap();
        prop_assert!((c.total_power() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn swapped_conjugate_feed_is_reciprocal((n, alpha, a, b, nu, seed) in setup(), omega in -5.0f64..5.0) {
        let spec = LatticeSpec::open(n, n, alpha);
        let dis = sample_onsite_disorder(&spec, 0.5, seed).unwrap();
        let h = apply_disorder(&build_h0(&spec).unwrap(), &spec, &dis).unwrap();
        let probe = ProbeSpec::new(a, b, nu);
        let f = transport(&h, &probe, omega).unwrap();
        let g = transport(&h.transpose(), &probe.swapped(), omega).unwrap();
        for (x, y) in [(f.t, g.t), (f.r, g.r), (f.r_prime, g.r_prime), (f.t_prime, g.t_prime)] {
            prop_assert!((x.norm() - y.norm()).abs() <= 1e-10);
        }
    }

    #[test]
    fn loss_never_raises_the_peak_drop((n, alpha, a, b, nu, _seed) in setup(), loss in 0.001f64..0.3) {
        let spec = LatticeSpec::open(n, n, alpha);
        let h = build_h0(&spec).unwrap();
        let hl = apply_disorder(&h, &spec, &DisorderSpec::default().with_loss(loss)).unwrap();
        let probe = ProbeSpec::new(a, b, nu);
        let grid: Vec<f64> = (0..241).map(|i| -6.0 + 0.05 * i as f64).collect();
        let peak = |m| {
            TransportSolver::new(m, &probe)
                .unwrap()
                .spectrum(&grid)
                .unwrap()
                .reflectivity()
                .into_iter()
                .fold(0.0, f64::max)
        };
        prop_assert!(peak(&hl) <= peak(&h) + 1e-12);
        for p in TransportSolver::new(&hl, &probe).unwrap().spectrum(&grid).unwrap().points {
            prop_assert!(p.total_power() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn solvers_agree((n, alpha, a, b, nu, seed) in setup(), omega in -5.0f64..5.0) {
        let spec = LatticeSpec::open(n, n, alpha);
        let dis = sample_magnetic_disorder(&spec, 0.3, seed).unwrap().with_loss(0.05);
        let h = apply_disorder(&build_h0(&spec).unwrap(), &spec, &dis).unwrap();
        let probe = ProbeSpec::new(a, b, nu);
        let x = transport(&h, &probe, omega).unwrap();
        let y = TransportSolver::new(&h, &probe).unwrap().at(omega).unwrap();
        for (p, q) in [(x.t, y.t), (x.r, y.r), (x.r_prime, y.r_prime), (x.t_prime, y.t_prime)] {
            prop_assert!((p - q).norm() <= 1e-10);
        }
    }
}

#[test]
fn resonance_peaks_sit_on_eigenvalues() {
    let spec = LatticeSpec::open(4, 4, 0.25);
    let h = build_h0(&spec).unwrap();
    let nu = 8.0 / 16.0;
    let probe = ProbeSpec::new((0, 0), (3, 0), nu);
    let eig = hermitian_eigenvalues(h.spin_block(crowlattice::lattice::Spin::Up).unwrap().entries()).unwrap();
    let grid: Vec<f64> = (0..4001).map(|i| -5.0 + 0.0025 * i as f64).collect();
    let r = TransportSolver::new(&h, &probe).unwrap().spectrum(&grid).unwrap().reflectivity();
    let mut peaks = 0;
    for i in 1..grid.len() - 1 {
        if r[i] > r[i - 1] && r[i] >= r[i + 1] && r[i] > 1e-6 {
            peaks += 1;
            let d = eig.iter().map(|e| (e - grid[i]).abs()).fold(f64::INFINITY, f64::min);
            assert!(d <= nu, "peak at {} is {d} from the nearest eigenvalue", grid[i]);
        }
    }
    assert!(peaks > 0);
}
