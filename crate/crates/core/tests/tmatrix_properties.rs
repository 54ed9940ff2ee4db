use std::f64::consts::PI;

use proptest::prelude::*;

use crowlattice::tmatrix::{
    bloch_dispersion, branch_cosines, m_cpl, m_res, m_scatt, m_wg, unit_cell, CellVariant,
    ChainParams, TransferMatrix,
};

#[derive(Debug, Clone)]
enum Element {
    Res(f64),
    Wg(f64, f64),
    Cpl(f64),
    Scatt(f64),
}

fn element() -> impl Strategy<Value = Element> {
    prop_oneof![
        (0.0f64..(4.0 * PI)).prop_map(Element::Res),
        ((0.0f64..(4.0 * PI)), (-1.0f64..1.0)).prop_map(|(b, p)| Element::Wg(b, p)),
        (0.05f64..0.999).prop_map(Element::Cpl),
        (-0.5f64..0.5).prop_map(Element::Scatt),
    ]
}

fn matrix(e: &Element) -> TransferMatrix {
    match *e {
        Element::Res(b) => m_res(b),
        Element::Wg(b, p) => m_wg(b, p),
        Element::Cpl(r) => {
            let t = num_complex::Complex64::new(0.0, (1.0 - r * r).sqrt());
            m_cpl(r, t)
        }
        Element::Scatt(e) => m_scatt(e),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lossless_products_are_unimodular(chain in prop::collection::vec(element(), 1..9)) {
        let m = chain.iter().fold(TransferMatrix::identity(), |acc, e| acc * matrix(e));
        prop_assert!((m.det().norm() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn plain_cell_band_gap_dichotomy(d in 0.0f64..2.0) {
        let f = 300.0;
        let r = ChainParams::r_for_finesse(f);
        let cell = unit_cell(&ChainParams::at_detuning(r, d, 1, 1, 0.0), CellVariant::Plain, 0.0);
        let propagating = bloch_dispersion(&cell).unwrap().iter().filter(|m| m.propagating).count();
        if d < 1.0 - 5.0 / f {
            prop_assert_eq!(propagating, 4);
        } else if d > 1.0 + 5.0 / f {
            prop_assert_eq!(propagating, 0);
        }
    }

    #[test]
    fn arm_imbalance_sign_swaps_branches(d in -0.9f64..0.9, phi in 0.05f64..0.6) {
        let r = ChainParams::r_for_finesse(300.0);
        let ks = |p: f64| -> Vec<f64> {
            let cell = unit_cell(&ChainParams::at_detuning(r, d, 1, 1, p), CellVariant::Plain, 0.0);
            let mut v: Vec<f64> = bloch_dispersion(&cell).unwrap().iter().map(|m| m.k_lambda.re).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let plus = ks(phi);
        let minus: Vec<f64> = {
            let mut v: Vec<f64> = ks(-phi).iter().map(|k| -k).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        for (a, b) in plus.iter().zip(&minus) {
            let diff = (a - b).rem_euclid(2.0 * PI);
            prop_assert!(diff.min(2.0 * PI - diff) <= 1e-6);
        }
    }

    #[test]
    fn waveguide_scatterer_without_scattering_is_plain(d in -0.9f64..0.9) {
        let r = ChainParams::r_for_finesse(300.0);
        let p = ChainParams::at_detuning(r, d, 1, 1, 0.0);
        let a = branch_cosines(&unit_cell(&p, CellVariant::Plain, 0.0)).unwrap();
        let b = branch_cosines(&unit_cell(&p, CellVariant::WaveguideScatterer, 0.0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }
}
