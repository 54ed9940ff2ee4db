use proptest::prelude::*;

use crowlattice::lattice::{build_h0, LatticeSpec, Spin};
use crowlattice::linalg::hermitian_eigenvalues;
use crowlattice::spectral::{
    bands_for_alpha, band_gaps, bond_current, eigensolve, magnetic_band_check, mid_gap_edge_state,
    perimeter_currents, EDGE_THRESHOLD,
};

#[test]
fn magnetic_bands_hold_n_over_q_states() {
    for n in [10, 20] {
        for (p, q) in [(1, 2), (1, 4), (1, 5), (2, 5)] {
            let alpha = p as f64 / q as f64;
            let spec = LatticeSpec::torus(n, n, alpha);
            let up = build_h0(&spec).unwrap().spin_block(Spin::Up).unwrap();
            let values = hermitian_eigenvalues(up.entries()).unwrap();
            let rep = magnetic_band_check(&values, alpha, 1.0, 0.05).unwrap();
            assert_eq!((rep.p, rep.q), (p, q));
            assert_eq!(rep.groups.len(), q as usize);
            assert!(rep.groups.iter().all(|g| g.2 == n * n / q as usize));
            assert!(rep.contained, "{n}x{n} at {p}/{q}: {:?} vs {:?}", rep.groups, rep.bands);
        }
    }
}

#[test]
fn reversing_spin_reverses_perimeter_currents() {
    let spec = LatticeSpec::open(10, 10, 0.25);
    let h = build_h0(&spec).unwrap();
    let gaps = band_gaps(&bands_for_alpha(0.25, 1.0, 64).unwrap());
    let gap = gaps.iter().copied().find(|g| g.0 < 1.5 && 1.5 < g.1).unwrap();
    let up = h.spin_block(Spin::Up).unwrap();
    let down = h.spin_block(Spin::Down).unwrap();
    let eu = eigensolve(&up).unwrap();
    let ed = eigensolve(&down).unwrap();
    let ku = mid_gap_edge_state(&eu, &spec, gap, EDGE_THRESHOLD).unwrap();
    let kd = mid_gap_edge_state(&ed, &spec, gap, EDGE_THRESHOLD).unwrap();
    let cu = perimeter_currents(&bond_current(&up, &eu.vector(ku)), 10, 10, Spin::Up);
    let cd = perimeter_currents(&bond_current(&down, &ed.vector(kd)), 10, 10, Spin::Down);
    for (a, b) in cu.iter().zip(&cd) {
        assert!(a * b < 0.0);
        assert!((a + b).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spectrum_is_a_multiset_even_in_flux(nx in 1usize..8, ny in 1usize..8, alpha in -1.0f64..1.0) {
        let a = eigensolve(&build_h0(&LatticeSpec::open(nx, ny, alpha)).unwrap()).unwrap();
        let b = eigensolve(&build_h0(&LatticeSpec::open(nx, ny, -alpha)).unwrap()).unwrap();
        for (x, y) in a.real_values().unwrap().iter().zip(b.real_values().unwrap()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn eigenstates_conserve_current(nx in 2usize..7, ny in 2usize..7, alpha in -0.5f64..0.5) {
        let h = build_h0(&LatticeSpec::open(nx, ny, alpha)).unwrap().spin_block(Spin::Up).unwrap();
        let eig = eigensolve(&h).unwrap();
        for k in 0..eig.len() {
            let field = bond_current(&h, &eig.vector(k));
            for y in 0..ny {
                for x in 0..nx {
                    let s = crowlattice::lattice::SiteIndex::new(x, y, Spin::Up);
                    prop_assert!(field.outflow(s).abs() <= 1e-10);
                }
            }
        }
    }
}
